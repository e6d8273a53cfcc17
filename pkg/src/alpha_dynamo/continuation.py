"""Growing Bloch modes for epsilon > 0 by continuation of the dispersion root.

In Fourier variables with q(k) = 2 pi k + eps^2 xi the perturbed cell operator
acting on mean-free fields reads

    L b = -(|q|^2 + eps^4 mu) b + eps * fluct(i q ^ (U ^ b))

and the fluctuation solves L b~ = -i q ^ (U ^ bbar). At eps = 0 this is the
plain Laplacian and everything reduces to :mod:`alpha_dynamo.alpha_zero`.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import alpha_zero as az
from .fourier_field import (
    BoxSpec,
    SpectralVectorField,
    dealiased_size,
    from_grid,
    load_field,
    mean_part,
    save_field,
    to_grid,
    wavevectors,
    wedge,
)

log = logging.getLogger(__name__)


class SolverDiverged(RuntimeError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


class DerivativeVanished(RuntimeError):
    pass


class EigenvectorMismatch(RuntimeError):
    pass


GMRES_RTOL = 1e-14
GMRES_MAXITER = 200
RESIDUAL_TOL = 1e-10


class PerturbedCellOperator:
    """Matrix-free perturbed cell operator for fixed (U, xi, eps, mu)."""

    def __init__(self, U, xi, epsilon, mu):
        self.U = U
        self.N = U.N
        self.xi = np.asarray(xi, float)
        self.epsilon = float(epsilon)
        self.mu = complex(mu)
        self.kappa = self.epsilon ** 2 * self.xi
        self.q = 2 * np.pi * wavevectors(self.N) + self.kappa[:, None, None, None]
        self.M = dealiased_size(self.N)
        self._Ugrid = to_grid(U.coeffs, self.M)
        diag = -(np.sum(self.q ** 2, axis=0) + self.epsilon ** 4 * self.mu)
        diag[self.N, self.N, self.N] = 1.0
        self.diag = diag
        self.shape = (3,) + diag.shape

    def _curl_wedge(self, b):
        """fluct(i q ^ (U ^ b)) for a full coefficient array b."""
        g = np.cross(self._Ugrid, to_grid(b, self.M), axis=0)
        w = from_grid(g, self.N)
        out = 1j * np.cross(self.q, w, axis=0)
        out[:, self.N, self.N, self.N] = 0
        return out

    def apply(self, b):
        b = np.array(b, complex)
        b[:, self.N, self.N, self.N] = 0
        out = self.diag * b
        if self.epsilon:
            out = out + self.epsilon * self._curl_wedge(b)
        out[:, self.N, self.N, self.N] = 0
        return out

    def source(self, bbar):
        """-(i q ^ (U ^ bbar)) restricted to k != 0."""
        src = az._cell_source_coeffs(self.U, bbar)
        out = -1j * np.cross(self.q, src, axis=0)
        out[:, self.N, self.N, self.N] = 0
        return out

    def solve(self, rhs, x0=None):
        d = np.abs(self.diag)
        if d.min() <= 1e-14 * d.max():
            raise SolverDiverged(f"shifted diffusion symbol vanishes at mu={self.mu}")
        if not self.epsilon:
            return rhs / self.diag
        n = rhs.size
        shape = self.shape

        def mv(x):
            x = x.reshape(shape)
            return (x + self.epsilon * self._curl_wedge(x) / self.diag).ravel()

        A = LinearOperator((n, n), matvec=mv, dtype=complex)
        b = (rhs / self.diag).ravel()
        x0 = None if x0 is None else np.asarray(x0).ravel()
        x, info = gmres(A, b, x0=x0, rtol=GMRES_RTOL, atol=0.0, restart=60,
                        maxiter=GMRES_MAXITER)
        x = x.reshape(shape)
        res = np.linalg.norm(self.apply(x) - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if not res <= RESIDUAL_TOL:
            raise SolverDiverged(
                f"relative residual {res:.2e} after GMRES (info={info}) at eps={self.epsilon}")
        return x


def solve_fluct(U, xi, epsilon, lam, bbar, op=None):
    """Mean-free fluctuation b~ of the Bloch mode for a given mean vector."""
    if not epsilon:
        c = az.inverse_laplacian_solve(U, bbar)
        return SpectralVectorField(U.N, c, bool(np.all(np.isreal(bbar))))
    op = PerturbedCellOperator(U, xi, epsilon, lam) if op is None else op
    return SpectralVectorField(U.N, op.solve(op.source(bbar)))


def alpha_eps(U, xi, epsilon, mu):
    """alpha_{xi,eps,mu}(U); equals alpha(U) exactly at eps = 0."""
    if not epsilon:
        return az.alpha(U).entries
    op = PerturbedCellOperator(U, xi, epsilon, mu)
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        bt = solve_fluct(U, xi, epsilon, mu, e, op=op)
        cols.append(mean_part(wedge(U.field, bt)))
    return np.stack(cols, axis=1)


def shifted_matrix(a, xi, mu):
    return az.mean_matrix(a, xi) - complex(mu) * np.eye(3)


def dispersion(U, xi, epsilon, mu, a=None):
    """f(eps, mu) = det(i xi ^ alpha_{xi,eps,mu} - |xi|^2 - mu)."""
    a = alpha_eps(U, xi, epsilon, mu) if a is None else a
    return complex(np.linalg.det(shifted_matrix(a, xi, mu)))


def dispersion_scale(a, xi, mu):
    """Natural magnitude of the determinant: cube of the summed entry scales."""
    xi = np.asarray(xi, float)
    Ax = np.linalg.norm(1j * az.cross_matrix(xi) @ np.asarray(a), 2)
    return float((Ax + xi @ xi + abs(mu)) ** 3)


def newton_lambda(U, xi, epsilon, lambda_init, scale=None, max_iters=50,
                  f_rtol=1e-10, step_atol=1e-12, step_rtol=1e-9):
    """Secant iteration on mu -> f(eps, mu). Returns (lambda, |f|/scale, iterations)."""
    mu0 = complex(lambda_init)
    if scale is None:
        scale = dispersion_scale(az.alpha(U).entries, xi, mu0)
    f0 = dispersion(U, xi, epsilon, mu0)
    history = [(mu0, f0)]
    if abs(f0) <= 1e-3 * f_rtol * scale:
        return mu0, abs(f0) / scale, 0
    h = 1e-7 * max(abs(mu0), 1e-12)
    mu1 = mu0 + h
    f1 = dispersion(U, xi, epsilon, mu1)
    history.append((mu1, f1))
    for it in range(1, max_iters + 1):
        denom = f1 - f0
        if abs(denom) <= 1e-300 or abs(denom) < 1e-15 * max(abs(f1), abs(f0)):
            raise DerivativeVanished(f"secant denominator {abs(denom):.2e} at mu={mu1}")
        step = -f1 * (mu1 - mu0) / denom
        mu0, f0 = mu1, f1
        mu1 = mu1 + step
        if not np.isfinite(mu1):
            break
        f1 = dispersion(U, xi, epsilon, mu1)
        history.append((mu1, f1))
        if abs(f1) <= f_rtol * scale and abs(step) <= step_atol + step_rtol * abs(mu1):
            return mu1, abs(f1) / scale, it
    raise NoConvergence(f"no root after {max_iters} iterations from {lambda_init}", history)


@dataclass
class BranchSample:
    epsilon: float
    lam: complex
    residual: float
    newton_iters: int


@dataclass
class ContinuationBranch:
    samples: list
    xi: np.ndarray
    epsilon_max_reached: float
    reason: str = "complete"
    scale: float = 1.0

    @property
    def epsilons(self):
        return np.array([s.epsilon for s in self.samples])

    @property
    def lambdas(self):
        return np.array([s.lam for s in self.samples])

    def anomalies(self, imag_tol=1e-8):
        return [s for s in self.samples if abs(s.lam.imag) > imag_tol]


def continue_branch(U, xi, epsilon_max, steps, lambda0=None, f_rtol=1e-10):
    """Follow lambda(eps) on a uniform grid of ``steps`` samples in [0, epsilon_max]."""
    xi = np.asarray(xi, float)
    a0 = az.alpha(U).entries
    if lambda0 is None:
        lambda0, _ = az._leading_eigenpair(az.mean_matrix(a0, xi))
    scale = dispersion_scale(a0, xi, lambda0)
    lam0, res0, it0 = newton_lambda(U, xi, 0.0, lambda0, scale=scale, f_rtol=f_rtol)
    samples = [BranchSample(0.0, lam0, res0, it0)]
    grid = np.linspace(0.0, epsilon_max, steps) if steps > 1 else np.array([0.0])
    reason = "complete"
    for eps in grid[1:]:
        guess = _predict(samples, eps)
        try:
            lam, res, its = newton_lambda(U, xi, eps, guess, scale=scale, f_rtol=f_rtol)
        except (NoConvergence, DerivativeVanished, SolverDiverged) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            break
        if not lam.real > 0:
            reason = f"growth lost at eps={eps:.6g} (Re lambda={lam.real:.3e})"
            break
        samples.append(BranchSample(float(eps), lam, res, its))
        log.debug("eps=%.6g lambda=%s residual=%.2e iters=%d", eps, lam, res, its)
    branch = ContinuationBranch(samples, xi, samples[-1].epsilon, reason, scale)
    for s in branch.anomalies():
        log.warning("imaginary part %.3e at eps=%.6g", s.lam.imag, s.epsilon)
    return branch


def _predict(samples, eps):
    """Quadratic extrapolation from the last three samples."""
    tail = samples[-3:]
    xs = np.array([s.epsilon for s in tail])
    ys = np.array([s.lam for s in tail])
    out = 0j
    for i in range(len(xs)):
        w = 1.0
        for j in range(len(xs)):
            if j != i:
                w *= (eps - xs[j]) / (xs[i] - xs[j])
        out += w * ys[i]
    return out


def dispersion_derivative(U, xi, epsilon, mu, rel_step=1e-6):
    """Centred finite difference of f in mu."""
    h = rel_step * max(abs(mu), 1e-12)
    return (dispersion(U, xi, epsilon, mu + h) - dispersion(U, xi, epsilon, mu - h)) / (2 * h)


def extrapolation_error(values):
    """Miss of the cubic through samples 0..3 at sample 4 (equally spaced).

    This is the fourth difference, O(h^4) for an analytic branch.
    """
    f = np.asarray(values)
    if f.shape[0] != 5:
        raise ValueError("need five equally spaced samples")
    return float(abs(f[4] - 4 * f[3] + 6 * f[2] - 4 * f[1] + f[0]))


def extrapolation_ratio(branch):
    """Cubic-extrapolation error at spacing 2h over that at spacing h (about 16)."""
    lam = branch.lambdas
    if len(lam) < 9:
        raise ValueError("need at least 9 branch samples")
    return extrapolation_error(lam[0:9:2]) / extrapolation_error(lam[0:5])


# ---------------------------------------------------------------- modes

@dataclass
class BlochMode:
    xi: np.ndarray
    epsilon: float
    lam: complex
    bbar: np.ndarray
    btilde: SpectralVectorField
    box: BoxSpec | None
    box_flags: dict = field(default_factory=dict)

    @property
    def kappa(self):
        return self.epsilon ** 2 * np.asarray(self.xi)

    def envelope(self):
        """Coefficients of bbar + eps * b~ (the periodic Bloch envelope)."""
        c = self.epsilon * self.btilde.coeffs.copy()
        N = self.btilde.N
        c[:, N, N, N] += self.bbar
        return SpectralVectorField(N, c)

    def bloch_divergence(self):
        c = self.envelope().coeffs
        q = 2 * np.pi * wavevectors(self.btilde.N) + self.kappa[:, None, None, None]
        div = np.abs(np.sum(q * c, axis=0))
        qn = np.linalg.norm(q, axis=0) * np.linalg.norm(c, axis=0)
        return float(div.max() / max(qn.max(), 1e-300))


def box_for(xi, epsilon, tol=1e-9):
    """Box periods 2 pi / (eps^2 |xi_i|), 1 where xi_i = 0."""
    if not epsilon:
        return None, {"undefined": True}
    T, flags = [], {"zero_components": [], "non_integer": []}
    for i, x in enumerate(np.asarray(xi, float)):
        if x == 0:
            T.append(1)
            flags["zero_components"].append(i)
            continue
        t = 2 * np.pi / (epsilon ** 2 * abs(x))
        r = round(t)
        if abs(t - r) > tol * max(t, 1.0) or r < 1:
            flags["non_integer"].append(i)
            return None, flags | {"raw_T": t}
        T.append(int(r))
    return BoxSpec(tuple(T)), flags


def build_mode(U, xi, epsilon, lam, eig_tol=1e-8):
    xi = np.asarray(xi, float)
    a = alpha_eps(U, xi, epsilon, lam)
    Mx = az.mean_matrix(a, xi)
    w, v = np.linalg.eig(Mx)
    i = int(np.argmin(np.abs(w - lam)))
    if abs(w[i] - lam) > eig_tol * max(1.0, abs(lam)):
        raise EigenvectorMismatch(f"closest eigenvalue {w[i]} vs lambda {lam}")
    b = v[:, i] / np.linalg.norm(v[:, i])
    j = int(np.argmax(np.abs(b)))
    b = b * (abs(b[j]) / b[j])
    bt = solve_fluct(U, xi, epsilon, lam, b)
    box, flags = box_for(xi, epsilon)
    return BlochMode(xi, float(epsilon), complex(lam), b, bt, box, flags)


# ---------------------------------------------------------------- outputs

def fmt(x):
    return format(float(x), ".17g")


def write_branch_csv(branch, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "re_lambda", "im_lambda", "residual", "newton_iters"])
        for s in branch.samples:
            w.writerow([fmt(s.epsilon), fmt(s.lam.real), fmt(s.lam.imag),
                        fmt(s.residual), s.newton_iters])


def read_branch_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [BranchSample(float(r["epsilon"]), complex(float(r["re_lambda"]), float(r["im_lambda"])),
                         float(r["residual"]), int(r["newton_iters"])) for r in rows]


def _cplx(z):
    return [fmt(complex(z).real), fmt(complex(z).imag)]


def save_mode(mode, stem):
    """Write ``stem.field`` (b~) and ``stem.json`` (xi, epsilon, lambda, bbar, box)."""
    save_field(mode.btilde, f"{stem}.field")
    manifest = {
        "xi": [fmt(x) for x in mode.xi],
        "epsilon": fmt(mode.epsilon),
        "lambda": _cplx(mode.lam),
        "bbar": [_cplx(z) for z in mode.bbar],
        "box": None if mode.box is None else list(mode.box.T),
        "box_flags": mode.box_flags,
        "field": os.path.basename(f"{stem}.field"),
    }
    with open(f"{stem}.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_mode(stem):
    with open(f"{stem}.json") as fh:
        m = json.load(fh)
    bt = load_field(f"{stem}.field")
    box = None if m["box"] is None else BoxSpec(tuple(m["box"]))
    return BlochMode(
        np.array([float(x) for x in m["xi"]]),
        float(m["epsilon"]),
        complex(*map(float, m["lambda"])),
        np.array([complex(*map(float, z)) for z in m["bbar"]]),
        bt, box, m.get("box_flags", {}),
    )
