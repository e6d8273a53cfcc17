"""Cell problem, alpha tensor and mean-field mode selection at epsilon = 0."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fourier_field import (
    SpectralVectorField,
    mean_part,
    wavevectors,
    wedge,
)


class NoUnstableDirection(RuntimeError):
    pass


class SnapDestroyedGrowth(RuntimeError):
    pass


@dataclass(frozen=True)
class AlphaMatrix:
    entries: np.ndarray

    @property
    def hermiticity_defect(self):
        return float(np.max(np.abs(self.entries - self.entries.T)))

    @property
    def imag_defect(self):
        return float(np.max(np.abs(self.entries.imag)))

    @property
    def scale(self):
        return float(np.linalg.norm(self.entries))

    def is_real_symmetric(self, rtol=1e-10):
        bound = rtol * max(self.scale, 1e-300)
        return self.hermiticity_defect <= bound and self.imag_defect <= bound

    @property
    def real(self):
        """Symmetrised real part, used once the defects have been checked."""
        a = self.entries.real
        return 0.5 * (a + a.T)


@dataclass(frozen=True)
class MeanModeSolution:
    xi: np.ndarray
    lam: complex
    b0: np.ndarray
    gamma: float
    direction: np.ndarray
    xi_opt: np.ndarray
    lam_opt: complex
    snapped: bool
    fractions: tuple = ()

    @property
    def growing(self):
        return self.lam.real > 0


def cross_matrix(v):
    """Matrix of v ^ (.)."""
    v1, v2, v3 = v
    return np.array([[0, -v3, v2], [v3, 0, -v1], [-v2, v1, 0]], dtype=complex)


def _cell_source_coeffs(U, bbar):
    """Coefficients of U ^ bbar for a constant vector bbar (exact, no transform)."""
    b = np.asarray(bbar, complex)[:, None, None, None]
    return np.cross(U.coeffs, b, axis=0)


def inverse_laplacian_solve(U, bbar):
    """b~(k) = i k ^ (U(k) ^ bbar) / (2 pi |k|^2), zero mean."""
    kv = wavevectors(U.N)
    k2 = np.sum(kv ** 2, axis=0)
    k2[U.N, U.N, U.N] = np.inf
    return 1j * np.cross(kv, _cell_source_coeffs(U, bbar), axis=0) / (2 * np.pi * k2)


def cell_solve(U, bbar):
    """Solve Delta b~ = -curl(U ^ bbar) on mean-free fields."""
    c = inverse_laplacian_solve(U, bbar)
    real = bool(np.all(np.isreal(bbar)))
    return SpectralVectorField(U.N, c, real)


def alpha(U):
    """alpha(U) column j = mean(U ^ b~_j) with b~_j the cell solution for e_j."""
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        cols.append(mean_part(wedge(U.field, cell_solve(U, e))))
    return AlphaMatrix(np.stack(cols, axis=1))


def alpha_fourier_sum(U):
    """Closed Fourier-sum form: sum_k U(-k) ^ [i k ^ (U(k) ^ e_j)] / (2 pi |k|^2)."""
    c = U.coeffs
    c_neg = c[:, ::-1, ::-1, ::-1]
    kv = wavevectors(U.N)
    k2 = np.sum(kv ** 2, axis=0)
    k2[U.N, U.N, U.N] = np.inf
    out = np.empty((3, 3), complex)
    for j in range(3):
        e = np.zeros(3)
        e[j] = 1.0
        inner = np.cross(c, e[:, None, None, None], axis=0)
        bt = 1j * np.cross(kv, inner, axis=0) / (2 * np.pi * k2)
        out[:, j] = np.sum(np.cross(c_neg, bt, axis=0), axis=(1, 2, 3))
    return AlphaMatrix(out)


def mean_matrix(alpha_, xi):
    """i xi ^ (alpha .) - |xi|^2 Id."""
    a = alpha_.entries if isinstance(alpha_, AlphaMatrix) else np.asarray(alpha_)
    xi = np.asarray(xi, float)
    return 1j * cross_matrix(xi) @ a - np.dot(xi, xi) * np.eye(3)


def direction_gamma(a, e):
    """Largest real part among eigenvalues of i e ^ (alpha .)."""
    return float(np.max(np.linalg.eigvals(1j * cross_matrix(e) @ a).real))


def fibonacci_sphere(n):
    if n <= 0:
        return np.zeros((0, 3))
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + 5 ** 0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _canonical(e):
    e = np.asarray(e, float)
    e = e / np.linalg.norm(e)
    e = np.where(np.abs(e) < 1e-14, 0.0, e)
    nz = np.flatnonzero(e)
    if nz.size and e[nz[0]] < 0:
        e = -e
    return e + 0.0


def _leading_eigenpair(M):
    w, v = np.linalg.eig(M)
    i = int(np.argmax(w.real))
    b = v[:, i] / np.linalg.norm(v[:, i])
    j = int(np.argmax(np.abs(b)))
    b = b * (abs(b[j]) / b[j])
    return complex(w[i]), b


def snap_component(x, bound):
    """Nearest 2 pi p/q with q <= bound; returns (value, Fraction)."""
    frac = Fraction(x / (2 * np.pi)).limit_denominator(bound)
    return 2 * np.pi * float(frac), frac


def select_xi(alpha_, direction_samples=200, denominator_bound=None, tol=1e-12):
    """Pick an unstable wavevector by direction sampling and radius optimisation.

    Along a unit direction e the growth rate is gamma(e) r - r^2, maximal at
    r = gamma/2. Ties in gamma are broken towards the lexicographically largest
    direction so the result does not depend on sampling order. With a
    ``denominator_bound``, nonzero components of xi are snapped to 2 pi p/q.
    """
    a = alpha_.real if isinstance(alpha_, AlphaMatrix) else np.asarray(alpha_, float)
    scale = max(np.linalg.norm(a), 1e-300)
    _, vecs = np.linalg.eigh(a)
    cands = [_canonical(v) for v in vecs.T]
    cands += [_canonical(v) for v in fibonacci_sphere(direction_samples)]
    gammas = np.array([direction_gamma(a, e) for e in cands])
    gmax = gammas.max()
    if not gmax > tol * scale:
        raise NoUnstableDirection(f"max growth factor {gmax:.3e} over sampled directions")
    ties = [e for e, g in zip(cands, gammas) if g >= gmax - 1e-12 * scale]
    e = max(ties, key=lambda v: tuple(v))
    gamma = direction_gamma(a, e)
    xi_opt = 0.5 * gamma * e
    lam_opt, b_opt = _leading_eigenpair(mean_matrix(a, xi_opt))
    if denominator_bound is None:
        return MeanModeSolution(xi_opt, lam_opt, b_opt, gamma, e, xi_opt, lam_opt, False)
    xi = np.zeros(3)
    fracs = []
    for i in range(3):
        if xi_opt[i] != 0.0:
            xi[i], f = snap_component(xi_opt[i], denominator_bound)
            fracs.append(f)
        else:
            fracs.append(Fraction(0))
    lam, b = _leading_eigenpair(mean_matrix(a, xi))
    if not lam.real > 0:
        raise SnapDestroyedGrowth(
            f"snapped xi={xi} gives Re lambda={lam.real:.3e}; raise denominator_bound")
    return MeanModeSolution(xi, lam, b, gamma, e, xi_opt, lam_opt, True, tuple(fracs))
