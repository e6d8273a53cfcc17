"""Truncated Fourier representation of 3-vector fields on the unit torus.

Fields live on T^3 = [0, 1]^3 with basis e^{2 pi i k.theta}; every derivative
symbol therefore carries a factor 2 pi. Coefficients are stored as a dense
complex array of shape ``(3, 2N+1, 2N+1, 2N+1)`` indexed by ``k + N``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import config

DEFAULT_TOL = 1e-10


class NonzeroMean(ValueError):
    pass


class NotDivergenceFree(ValueError):
    pass


class NotReal(ValueError):
    pass


class FieldFormatError(ValueError):
    """Raised when a field file is malformed or truncated."""


def wave_indices(N):
    """Integer mode indices ``-N..N`` as three broadcastable arrays."""
    k = np.arange(-N, N + 1)
    return k[:, None, None], k[None, :, None], k[None, None, :]


def wavevectors(N):
    """Array of shape (3, 2N+1, 2N+1, 2N+1) holding k at each slot."""
    k1, k2, k3 = np.meshgrid(*(np.arange(-N, N + 1),) * 3, indexing="ij")
    return np.stack([k1, k2, k3]).astype(float)


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    N: int
    coeffs: np.ndarray
    reality_flag: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        n = 2 * self.N + 1
        if c.shape != (3, n, n, n):
            raise ValueError(f"coeffs must have shape {(3, n, n, n)}, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, N, reality_flag=False):
        n = 2 * N + 1
        return cls(N, np.zeros((3, n, n, n), complex), reality_flag)

    @classmethod
    def from_modes(cls, modes, N, reality_flag=False):
        """Build from a mapping ``{(k1, k2, k3): 3-vector}``."""
        c = np.zeros((3, 2 * N + 1, 2 * N + 1, 2 * N + 1), complex)
        for k, v in modes.items():
            if max(abs(int(x)) for x in k) > N:
                raise ValueError(f"mode {k} outside truncation N={N}")
            c[:, k[0] + N, k[1] + N, k[2] + N] += np.asarray(v, complex)
        return cls(N, c, reality_flag)

    def coeff(self, k):
        N = self.N
        return self.coeffs[:, k[0] + N, k[1] + N, k[2] + N].copy()

    def replace(self, coeffs, reality_flag=None):
        flag = self.reality_flag if reality_flag is None else reality_flag
        return SpectralVectorField(self.N, coeffs, flag)

    def __add__(self, other):
        _check_same_N(self, other)
        return self.replace(self.coeffs + other.coeffs,
                            self.reality_flag and other.reality_flag)

    def __sub__(self, other):
        _check_same_N(self, other)
        return self.replace(self.coeffs - other.coeffs,
                            self.reality_flag and other.reality_flag)

    def __mul__(self, scalar):
        real = self.reality_flag and np.isreal(scalar)
        return self.replace(self.coeffs * scalar, real)

    __rmul__ = __mul__

    def __neg__(self):
        return self.replace(-self.coeffs)

    def norm(self):
        """Euclidean norm of the coefficient array (the L2 norm by Parseval)."""
        return float(np.linalg.norm(self.coeffs.ravel()))

    def hermitian_defect(self):
        c = self.coeffs
        mirrored = np.conj(c[:, ::-1, ::-1, ::-1])
        return float(np.max(np.abs(c - mirrored), initial=0.0))

    def divergence_defect(self):
        """max_k |k.c(k)| / |c(k)| over nonzero modes."""
        kv = wavevectors(self.N)
        div = np.abs(np.sum(kv * self.coeffs, axis=0))
        mag = np.linalg.norm(self.coeffs, axis=0)
        mask = mag > 0
        if not mask.any():
            return 0.0
        return float(np.max(div[mask] / mag[mask]))

    def to_grid(self, M=None):
        """Values on an M^3 collocation grid (default M = 2N+1)."""
        return to_grid(self.coeffs, M)

    def resize(self, N):
        """Zero-pad or truncate to a new order N."""
        return SpectralVectorField(N, resize_coeffs(self.coeffs, N), self.reality_flag)


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    field: SpectralVectorField
    divergence_tolerance: float = DEFAULT_TOL

    @property
    def N(self):
        return self.field.N

    @property
    def coeffs(self):
        return self.field.coeffs


@dataclass(frozen=True)
class BoxSpec:
    T: tuple = (1, 1, 1)

    def __post_init__(self):
        T = tuple(int(t) for t in self.T)
        if len(T) != 3 or any(t < 1 for t in T) or any(t != s for t, s in zip(T, self.T)):
            raise ValueError(f"box periods must be three positive integers, got {self.T}")
        object.__setattr__(self, "T", T)


def _check_same_N(a, b):
    if a.N != b.N:
        raise ValueError(f"truncation mismatch: {a.N} vs {b.N}")


def resize_coeffs(c, N):
    old = (c.shape[-1] - 1) // 2
    out = np.zeros(c.shape[:-3] + (2 * N + 1,) * 3, complex)
    m = min(old, N)
    src = slice(old - m, old + m + 1)
    dst = slice(N - m, N + m + 1)
    out[..., dst, dst, dst] = c[..., src, src, src]
    return out


# ---------------------------------------------------------------- transforms

def _embed(c, M):
    """Place centred coefficients into an FFT-ordered M^3 array."""
    N = (c.shape[-1] - 1) // 2
    if M < 2 * N + 1:
        raise ValueError("grid too small for truncation")
    out = np.zeros(c.shape[:-3] + (M, M, M), complex)
    idx = np.arange(-N, N + 1) % M
    out[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]] = c
    return out


def _extract(a, N):
    M = a.shape[-1]
    idx = np.arange(-N, N + 1) % M
    return a[..., idx[:, None, None], idx[None, :, None], idx[None, None, :]]


def to_grid(c, M=None):
    N = (c.shape[-1] - 1) // 2
    M = 2 * N + 1 if M is None else M
    return sfft.ifftn(_embed(c, M), axes=(-3, -2, -1), norm="forward",
                      workers=config.workers())


def from_grid(g, N):
    a = sfft.fftn(g, axes=(-3, -2, -1), norm="forward", workers=config.workers())
    return _extract(a, N)


def dealiased_size(N):
    """Smallest fast grid size for which quadratic products are alias-free at order N."""
    return sfft.next_fast_len(3 * N + 1)


# ---------------------------------------------------------------- construction

def make_profile(coeffs, N, tol=DEFAULT_TOL):
    """Validate coefficients as an element of the mean-free solenoidal set.

    ``coeffs`` is either a mapping WaveIndex -> 3-vector or a dense array.
    """
    if isinstance(coeffs, dict):
        F = SpectralVectorField.from_modes(coeffs, N, reality_flag=True)
    else:
        F = SpectralVectorField(N, coeffs, reality_flag=True)
    scale = max(F.norm(), 1e-300)
    if np.linalg.norm(F.coeff((0, 0, 0))) > 0:
        raise NonzeroMean("coefficient at k = 0 must vanish")
    if F.hermitian_defect() > tol * scale:
        raise NotReal(f"Hermitian symmetry violated by {F.hermitian_defect():.3e}")
    if F.divergence_defect() > tol:
        raise NotDivergenceFree(f"k.coeff(k) defect {F.divergence_defect():.3e}")
    return VelocityProfile(F, tol)


def abc_flow(A, B, C, N=4):
    """ABC flow with the three Beltrami waves encoded in six Fourier modes."""
    if N < 1:
        raise ValueError("N must be >= 1")
    modes = {}

    def add(k, v):
        if np.any(np.asarray(v) != 0):
            modes[k] = modes.get(k, np.zeros(3, complex)) + np.asarray(v, complex)

    # A (sin z, cos z, 0) ; B (cos x, sin x) on (U3, U2) ; C on (U1, U3)
    add((0, 0, 1), A * np.array([-0.5j, 0.5, 0]))
    add((0, 0, -1), A * np.array([0.5j, 0.5, 0]))
    add((1, 0, 0), B * np.array([0, -0.5j, 0.5]))
    add((-1, 0, 0), B * np.array([0, 0.5j, 0.5]))
    add((0, 1, 0), C * np.array([0.5, 0, -0.5j]))
    add((0, -1, 0), C * np.array([0.5, 0, 0.5j]))
    return make_profile(modes, N)


def random_profile(N, rng=None, decay=4.0, amplitude=1.0, kmax=None):
    """Random real, mean-free, solenoidal profile with |U(k)| ~ |k|^-decay."""
    rng = np.random.default_rng(rng)
    kv = wavevectors(N)
    kk = np.sqrt(np.sum(kv ** 2, axis=0))
    n = 2 * N + 1
    c = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))
    with np.errstate(divide="ignore"):
        env = np.where(kk > 0, kk, np.inf) ** (-decay)
    if kmax is not None:
        env = np.where(kk <= kmax, env, 0.0)
    c = c * env
    c = 0.5 * (c + np.conj(c[:, ::-1, ::-1, ::-1]))
    c = leray_coeffs(c)
    c[:, N, N, N] = 0
    norm = np.linalg.norm(c)
    if norm > 0:
        c *= amplitude / norm
    return make_profile(c, N)


# ---------------------------------------------------------------- algebra

def mean_part(F):
    return F.coeff((0, 0, 0))


def fluct_part(F):
    c = F.coeffs.copy()
    c[:, F.N, F.N, F.N] = 0
    return F.replace(c)


def curl_symbol(c, kappa=(0.0, 0.0, 0.0)):
    N = (c.shape[-1] - 1) // 2
    q = 2 * np.pi * wavevectors(N) + np.asarray(kappa, float)[:, None, None, None]
    return 1j * np.cross(q, c, axis=0)


def curl_bloch(F, kappa=(0.0, 0.0, 0.0)):
    """Coefficients (2 pi i k + i kappa) ^ F(k)."""
    kappa = np.asarray(kappa, float)
    real = F.reality_flag and not np.any(kappa)
    return F.replace(curl_symbol(F.coeffs, kappa), real)


def wedge_coeffs(a, b, N=None, M=None):
    """Truncated convolution of the pointwise cross product a ^ b."""
    Na = (a.shape[-1] - 1) // 2
    N = Na if N is None else N
    M = dealiased_size(max(Na, (b.shape[-1] - 1) // 2, N)) if M is None else M
    ga = to_grid(a, M)
    gb = to_grid(b, M)
    return from_grid(np.cross(ga, gb, axis=0), N)


def wedge(Fa, Fb):
    _check_same_N(Fa, Fb)
    out = wedge_coeffs(Fa.coeffs, Fb.coeffs)
    real = Fa.reality_flag and Fb.reality_flag
    if real:
        out = 0.5 * (out + np.conj(out[:, ::-1, ::-1, ::-1]))
    return SpectralVectorField(Fa.N, out, real)


def leray_coeffs(c):
    N = (c.shape[-1] - 1) // 2
    kv = wavevectors(N)
    k2 = np.sum(kv ** 2, axis=0)
    k2[N, N, N] = 1.0
    out = c - kv * (np.sum(kv * c, axis=0) / k2)
    out[:, N, N, N] = c[:, N, N, N]
    return out


def leray_project(F):
    return F.replace(leray_coeffs(F.coeffs))


def seminorm(F, m):
    kv = wavevectors(F.N)
    k2 = np.sum(kv ** 2, axis=0)
    w = k2 ** m  # 0**0 == 1 keeps the mean for m = 0
    return float(np.sqrt(np.sum(w * np.sum(np.abs(F.coeffs) ** 2, axis=0))))


def sobolev_norm(F, s, T=BoxSpec()):
    """H^s norm with mode index k read as box frequency k_i / T_i."""
    T = T.T if isinstance(T, BoxSpec) else tuple(T)
    kv = wavevectors(F.N) / np.asarray(T, float)[:, None, None, None]
    w = (1.0 + np.sum((2 * np.pi * kv) ** 2, axis=0)) ** s
    return float(np.sqrt(np.sum(w * np.sum(np.abs(F.coeffs) ** 2, axis=0))))


def l2_norm(F):
    return sobolev_norm(F, 0.0)


# ---------------------------------------------------------------- file format

FORMAT_VERSION = 1


def save_field(F, path):
    """Write a one-line JSON manifest followed by the raw little-endian block."""
    manifest = {
        "format_version": FORMAT_VERSION,
        "N": int(F.N),
        "reality_flag": bool(F.reality_flag),
        "layout": "lex_kx_ky_kz",
        "scalar": "f64le",
    }
    # (k1, k2, k3, component, re/im) with k3 fastest among modes
    block = np.ascontiguousarray(np.moveaxis(F.coeffs, 0, -1))
    raw = block.view(np.float64).astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode() + b"\n")
        fh.write(raw)


def load_field(path):
    data = Path(path).read_bytes()
    head, sep, raw = data.partition(b"\n")
    if not sep:
        raise FieldFormatError("missing manifest line")
    try:
        manifest = json.loads(head)
        N = int(manifest["N"])
        flag = bool(manifest["reality_flag"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FieldFormatError(f"bad manifest: {exc}") from exc
    if manifest.get("layout") != "lex_kx_ky_kz" or manifest.get("scalar") != "f64le":
        raise FieldFormatError("unsupported layout or scalar type")
    n = 2 * N + 1
    expected = 2 * 3 * n ** 3 * 8
    if len(raw) != expected:
        raise FieldFormatError(f"expected {expected} bytes of data, found {len(raw)}")
    vals = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    c = vals.view(np.complex128).reshape(n, n, n, 3)
    return SpectralVectorField(N, np.moveaxis(c, -1, 0).copy(), flag)
