"""Time integration of the linearised induction equation in the Bloch frame.

With b = e^{i kappa.theta} B and kappa = eps^2 xi the periodic envelope obeys,
in rescaled time,

    dB/dt = eps^-3 i q ^ (U ^ B) - eps^-4 |q|^2 B,     q = 2 pi k + kappa.

The diffusion is diagonal and handled exactly by second-order exponential
time differencing (ETDRK2); the induction term is explicit and dealiased.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .continuation import fmt
from .fourier_field import (
    SpectralVectorField,
    dealiased_size,
    from_grid,
    resize_coeffs,
    to_grid,
    wavevectors,
)


class StabilityViolation(RuntimeError):
    pass


class NanDetected(FloatingPointError):
    pass


class DegenerateInput(ValueError):
    pass


def phi1(z):
    z = np.asarray(z, complex)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    return np.where(small, 1 + z / 2 + z * z / 6, np.expm1(zs) / zs)


def phi2(z):
    z = np.asarray(z, complex)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    series = 0.5 + z / 6 + z * z / 24 + z ** 3 / 120
    return np.where(small, series, (np.expm1(zs) - zs) / zs ** 2)


def max_speed(U, M=None):
    g = to_grid(U.coeffs, M or dealiased_size(U.N)).real
    return float(np.sqrt(np.sum(g ** 2, axis=0)).max())


@dataclass
class DnsState:
    B: SpectralVectorField
    t: float
    epsilon: float
    xi: np.ndarray
    U: object

    @property
    def kappa(self):
        return self.epsilon ** 2 * np.asarray(self.xi, float)


class BlochInduction:
    """Discrete Bloch-frame induction operator at fixed (U, xi, eps, N)."""

    def __init__(self, U, xi, epsilon, N=None):
        if epsilon <= 0:
            raise ValueError("time integration needs eps > 0")
        self.N = U.N if N is None else N
        if U.N > self.N:
            raise ValueError("velocity truncation exceeds DNS truncation")
        self.U = U
        self.epsilon = float(epsilon)
        self.xi = np.asarray(xi, float)
        self.kappa = self.epsilon ** 2 * self.xi
        self.q = 2 * np.pi * wavevectors(self.N) + self.kappa[:, None, None, None]
        self.q2 = np.sum(self.q ** 2, axis=0)
        self.lin = -self.q2 / self.epsilon ** 4
        self.M = dealiased_size(self.N)
        self._Ugrid = to_grid(resize_coeffs(U.coeffs, self.N), self.M)
        self.umax = float(np.sqrt(np.sum(self._Ugrid.real ** 2, axis=0)).max())
        self._cache = {}

    def induction(self, c):
        """eps^-3 i q ^ (U ^ B), truncated."""
        w = from_grid(np.cross(self._Ugrid, to_grid(c, self.M), axis=0), self.N)
        return 1j * np.cross(self.q, w, axis=0) / self.epsilon ** 3

    def apply(self, c):
        return self.induction(c) + self.lin * c

    def stability_number(self, dt):
        """Largest explicit gain dt*phi1(L dt)*|rate| over the retained modes."""
        rate = np.sqrt(self.q2) * self.umax / self.epsilon ** 3
        return float(np.max(np.abs(dt * phi1(self.lin * dt)) * rate))

    def _coefs(self, dt):
        if dt not in self._cache:
            z = self.lin * dt
            self._cache = {dt: (np.exp(z), dt * phi1(z), dt * phi2(z))}
        return self._cache[dt]

    def step_coeffs(self, c, dt):
        E, P1, P2 = self._coefs(dt)
        n0 = self.induction(c)
        a = E * c + P1 * n0
        out = a + P2 * (self.induction(a) - n0)
        if not np.all(np.isfinite(out)):
            raise NanDetected("non-finite coefficients")
        return out

    def bloch_divergence(self, c):
        """|i q . B| relative to |q||B| (max over modes)."""
        div = np.abs(np.sum(self.q * c, axis=0))
        scale = np.sqrt(self.q2) * np.linalg.norm(c, axis=0)
        return float(div.max() / max(scale.max(), 1e-300))

    def project(self, c):
        """Bloch-Leray projection onto i q . B = 0."""
        q2 = np.where(self.q2 > 0, self.q2, 1.0)
        return c - self.q * (np.sum(self.q * c, axis=0) / q2)


def step(state, dt, c=0.5, op=None):
    """Advance one ETDRK2 step of size dt in rescaled time."""
    op = op or BlochInduction(state.U, state.xi, state.epsilon, state.B.N)
    g = op.stability_number(dt)
    if g > c:
        raise StabilityViolation(f"explicit gain {g:.3f} exceeds {c} at dt={dt}")
    new = op.step_coeffs(state.B.coeffs, dt)
    return replace(state, B=SpectralVectorField(op.N, new), t=state.t + dt)


def max_stable_dt(op, c=0.5, dt_max=1.0):
    """Largest dt <= dt_max with stability number <= c (bisection)."""
    if op.stability_number(dt_max) <= c:
        return dt_max
    lo, hi = 0.0, dt_max
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if op.stability_number(mid) <= c else (lo, mid)
    return lo


@dataclass
class GrowthReport:
    rate: float
    fit_window: tuple
    fit_residual: float
    series: list = field(default_factory=list)
    epsilon: float | None = None

    @property
    def rate_rawtime(self):
        return None if self.epsilon is None else self.rate * self.epsilon ** 3

    def as_dict(self):
        return {"rate": fmt(self.rate), "window": [fmt(x) for x in self.fit_window],
                "residual": fmt(self.fit_residual),
                "rate_rawtime": None if self.epsilon is None else fmt(self.rate_rawtime)}


def growth_rate(series, window=0.5, epsilon=None):
    """Least-squares slope of log(norm) over the trailing fraction ``window``."""
    t = np.array([s[0] for s in series], float)
    n = np.array([s[1] for s in series], float)
    if len(t) < 10:
        raise DegenerateInput("need at least 10 samples")
    if np.any(~(n > 0)):
        raise DegenerateInput("norms must be positive")
    t0 = t[-1] - window * (t[-1] - t[0])
    sel = t >= t0
    y = np.log(n[sel])
    A = np.vstack([t[sel], np.ones(sel.sum())]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return GrowthReport(float(coef[0]), (float(t[sel][0]), float(t[-1])), resid,
                        list(zip(t.tolist(), np.log(n).tolist())), epsilon)


def integrate(state, t_end, dt, op=None, every=1, c=0.5):
    """Run to t_end; returns final state and rows (t, l2, log l2, div_defect)."""
    op = op or BlochInduction(state.U, state.xi, state.epsilon, state.B.N)
    g = op.stability_number(dt)
    if g > c:
        raise StabilityViolation(f"explicit gain {g:.3f} exceeds {c} at dt={dt}")
    coeffs = np.array(state.B.coeffs)
    nsteps = int(round((t_end - state.t) / dt))
    rows = []

    def record(k):
        nrm = float(np.linalg.norm(coeffs))
        rows.append((state.t + k * dt, nrm, float(np.log(nrm)) if nrm > 0 else -np.inf,
                     op.bloch_divergence(coeffs)))

    record(0)
    for k in range(1, nsteps + 1):
        coeffs = op.step_coeffs(coeffs, dt)
        if k % every == 0 or k == nsteps:
            record(k)
    final = replace(state, B=SpectralVectorField(op.N, coeffs), t=state.t + nsteps * dt)
    return final, rows


def write_series_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "l2_norm", "log_norm", "div_defect"])
        for r in rows:
            w.writerow([fmt(x) for x in r])


def random_solenoidal(op, rng=None, decay=2.0):
    """Random Bloch-solenoidal envelope with a nonzero mean part."""
    rng = np.random.default_rng(rng)
    shape = (3,) + op.q2.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    kk = np.sqrt(np.sum(wavevectors(op.N) ** 2, axis=0))
    c = c * (1.0 + kk) ** (-decay)
    return op.project(c)


def validate_mode(mode, U, N=None):
    """Diffusion-weighted residual |W (A B - lambda B)| / |B| of a packaged mode.

    W(k) = eps^4 / (eps^4 + |q|^2) makes the fluctuating part of the residual
    order one and keeps the mean part in growth-rate units; at eps = 0 the
    limit is evaluated directly.
    """
    env = mode.envelope()
    N = env.N if N is None else N
    c = resize_coeffs(env.coeffs, N)
    nb = np.linalg.norm(c)
    if not nb > 0:
        raise DegenerateInput("zero field")
    eps = mode.epsilon
    kappa = eps ** 2 * np.asarray(mode.xi, float)
    q = 2 * np.pi * wavevectors(N) + kappa[:, None, None, None]
    q2 = np.sum(q ** 2, axis=0)
    M = dealiased_size(N)
    Ug = to_grid(resize_coeffs(U.coeffs, N), M)
    w = from_grid(np.cross(Ug, to_grid(c, M), axis=0), N)
    curl = 1j * np.cross(q, w, axis=0)
    bt = resize_coeffs(mode.btilde.coeffs, N)
    xi = np.asarray(mode.xi, float)
    res = np.empty_like(c)
    # fluctuating part: eps[(-|q|^2 - eps^4 lam) b~ + curl] / (eps^4 + |q|^2)
    with np.errstate(invalid="ignore", divide="ignore"):  # k = 0 overwritten below
        res[:] = eps * ((-q2 - eps ** 4 * mode.lam) * bt + curl) / (eps ** 4 + q2)
    # mean part: i xi ^ mean(U ^ b~) - |xi|^2 bbar - lam bbar, weighted by 1/(1+|xi|^2)
    wt = from_grid(np.cross(Ug, to_grid(bt, M), axis=0), N)[:, N, N, N]
    mean_res = 1j * np.cross(xi, wt) - (xi @ xi + mode.lam) * mode.bbar
    res[:, N, N, N] = mean_res / (1.0 + xi @ xi)
    return float(np.linalg.norm(res) / nb)
