"""Nonlinear pseudo-spectral MHD perturbation dynamics on an integer box.

The perturbation (u', b) around the steady flow (U, 0) obeys, in rescaled
time t' = eps^3 t and after Leray projection,

    du/dt = eps^-3 [ -P(U.grad u + u.grad U) + Lap u ] + eps^-3 P((curl b)^b - u.grad u)
    db/dt = eps^-3 curl(U ^ b) + eps^-4 Lap b     + eps^-3 curl(u ^ b)

written here as d/dt (u, b) = G (u, b) + Q((u, b), (u, b)). Box fields use an
anisotropic real-FFT layout (the box is long only along directions with a
nonzero large-scale wavevector), with the 2/3 truncation |k_i| <= (n_i - 1) // 3
so every quadratic product is an exact truncated convolution.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from . import config
from .continuation import fmt
from .fourier_field import BoxSpec, wavevectors
from .induction_dns import NanDetected, StabilityViolation, phi1, phi2

log = logging.getLogger(__name__)


class BoxMismatch(ValueError):
    pass


class HorizonExceeded(RuntimeError):
    pass


def eta_for(s, n=3):
    """Interpolation exponent 1/2 - (n + 2) / (4 s)."""
    return 0.5 - (n + 2) / (4.0 * s)


class BoxGrid:
    """Real-FFT spectral layout on the box prod_i [0, T_i)."""

    def __init__(self, box, points_per_unit=8):
        self.box = box if isinstance(box, BoxSpec) else BoxSpec(tuple(box))
        self.T = np.array(self.box.T, float)
        self.shape = tuple(sfft.next_fast_len(int(points_per_unit * t), real=True)
                           for t in self.box.T)
        n1, n2, n3 = self.shape
        self.ntot = n1 * n2 * n3
        k1 = np.fft.fftfreq(n1, 1.0 / n1)
        k2 = np.fft.fftfreq(n2, 1.0 / n2)
        k3 = np.arange(n3 // 2 + 1, dtype=float)
        self.kidx = np.stack(np.meshgrid(k1, k2, k3, indexing="ij"))
        self.K = 2 * np.pi * self.kidx / self.T[:, None, None, None]
        self.K2 = np.sum(self.K ** 2, axis=0)
        self.kmax = np.array([(n - 1) // 3 for n in self.shape])
        self.mask = np.all(np.abs(self.kidx) <= self.kmax[:, None, None, None], axis=0)
        # rfft half-plane multiplicity for norms
        w = np.full(k3.shape, 2.0)
        w[0] = 1.0
        if n3 % 2 == 0:
            w[-1] = 1.0
        self.mult = np.broadcast_to(w, self.K2.shape)
        self.spec_shape = (3,) + self.K2.shape

    # transforms: coefficients are normalised Fourier coefficients
    def to_grid(self, c):
        return sfft.irfftn(c, s=self.shape, axes=(-3, -2, -1), norm="forward",
                           workers=config.workers())

    def from_grid(self, g):
        c = sfft.rfftn(g, axes=(-3, -2, -1), norm="forward", workers=config.workers())
        return c * self.mask

    def curl(self, c):
        return 1j * np.cross(self.K, c, axis=0)

    def leray(self, c):
        K2 = np.where(self.K2 > 0, self.K2, 1.0)
        return c - self.K * (np.sum(self.K * c, axis=0) / K2)

    def divergence_defect(self, c):
        div = np.abs(np.sum(self.K * c, axis=0))
        scale = np.sqrt(self.K2) * np.linalg.norm(c, axis=0)
        return float(div.max() / max(scale.max(), 1e-300))

    def sobolev(self, c, s):
        w = (1.0 + self.K2) ** s * self.mult
        return float(np.sqrt(np.sum(w * np.sum(np.abs(c) ** 2, axis=0))))

    def place(self, idx, vals):
        """Spectral array of the real field sum_p v_p e^{2 pi i p.x/T} + c.c. / 2.

        ``idx`` are integer box indices (P, 3) and ``vals`` complex (P, 3); the
        real part of the complex field is returned in rfft layout.
        """
        full = np.zeros((3,) + self.shape, complex)
        idx = np.asarray(idx, int)
        vals = np.asarray(vals, complex)
        if np.any(np.abs(idx) > self.kmax):
            raise BoxMismatch("mode outside the box truncation")
        n = np.array(self.shape)
        ip = idx % n
        im = (-idx) % n
        for c in range(3):
            np.add.at(full[c], (ip[:, 0], ip[:, 1], ip[:, 2]), 0.5 * vals[:, c])
            np.add.at(full[c], (im[:, 0], im[:, 1], im[:, 2]), 0.5 * np.conj(vals[:, c]))
        return full[..., : self.shape[2] // 2 + 1]


def _cell_modes(coeffs, tol=0.0):
    N = (coeffs.shape[-1] - 1) // 2
    mag = np.linalg.norm(coeffs, axis=0)
    sel = np.argwhere(mag > tol * max(mag.max(), 1e-300))
    return sel - N, np.array([coeffs[:, a, b, c] for a, b, c in sel])


def tile_profile(U, grid):
    """Periodic tiling of the unit-cell velocity onto the box (exact in spectral space)."""
    ks, vals = _cell_modes(U.coeffs)
    if ks.size == 0:
        return np.zeros(grid.spec_shape, complex)
    idx = ks * np.array(grid.box.T)
    if np.any(np.abs(idx) > grid.kmax):
        raise BoxMismatch("velocity modes are not resolved on this box grid")
    # U is real, so the (k, -k) pair already carries the conjugate halves
    return grid.place(idx, vals)


def mode_on_box(mode, grid):
    """Real part of e^{i kappa.theta}(bbar + eps b~) as a box field."""
    env = mode.envelope()
    ks, vals = _cell_modes(env.coeffs)
    kappa = mode.epsilon ** 2 * np.asarray(mode.xi, float)
    shift = grid.T * kappa / (2 * np.pi)
    m = np.round(shift)
    if np.any(np.abs(shift - m) > 1e-8):
        raise BoxMismatch(f"Bloch phase {shift} is not periodic on box {grid.box.T}")
    idx = ks * np.array(grid.box.T) + m.astype(int)
    return grid.place(idx, vals)


@dataclass
class MhdState:
    u: np.ndarray
    b: np.ndarray
    t: float
    epsilon: float
    grid: BoxGrid
    s: float = 3.0

    def hs_norm(self, s=None):
        s = self.s if s is None else s
        g = self.grid
        return float(np.hypot(g.sobolev(self.u, s), g.sobolev(self.b, s)))

    def l2_norm(self):
        return self.hs_norm(0.0)

    def scaled(self, c):
        return replace(self, u=c * self.u, b=c * self.b)


class MhdSystem:
    """Perturbation dynamics around (U, 0) on a box grid."""

    def __init__(self, U, grid, epsilon):
        if epsilon <= 0:
            raise ValueError("eps must be positive")
        self.grid = grid
        self.epsilon = float(epsilon)
        self.U_hat = tile_profile(U, grid)
        self.Ug = grid.to_grid(self.U_hat)
        self.wUg = grid.to_grid(grid.curl(self.U_hat))
        self.umax = float(np.sqrt(np.sum(self.Ug ** 2, axis=0)).max())
        e3, e4 = self.epsilon ** -3, self.epsilon ** -4
        self.lin_u = -e3 * grid.K2
        self.lin_b = -e4 * grid.K2
        self._cache = {}

    # --- pieces
    def _grids(self, u, b):
        g = self.grid
        return g.to_grid(u), g.to_grid(g.curl(u)), g.to_grid(b), g.to_grid(g.curl(b))

    def linear_rhs(self, u, b):
        """G (u, b): linearisation around (U, 0), diffusion included."""
        g = self.grid
        e3 = self.epsilon ** -3
        ug, wug = g.to_grid(u), g.to_grid(g.curl(u))
        bg = g.to_grid(b)
        mom = g.from_grid(np.cross(self.wUg, ug, axis=0) + np.cross(wug, self.Ug, axis=0))
        du = -e3 * g.leray(mom) + self.lin_u * u
        db = e3 * g.curl(g.from_grid(np.cross(self.Ug, bg, axis=0))) + self.lin_b * b
        return du, db

    def nonlinear_q(self, u, b):
        g = self.grid
        e3 = self.epsilon ** -3
        ug, wug, bg, jg = self._grids(u, b)
        mom = g.from_grid(np.cross(jg, bg, axis=0) - np.cross(wug, ug, axis=0))
        du = e3 * g.leray(mom)
        db = e3 * g.curl(g.from_grid(np.cross(ug, bg, axis=0)))
        return du, db

    def explicit(self, u, b):
        """G + Q without the diagonal diffusion, in one pass of transforms."""
        g = self.grid
        e3 = self.epsilon ** -3
        ug, wug, bg, jg = self._grids(u, b)
        mom = (np.cross(jg, bg, axis=0) - np.cross(wug, ug, axis=0)
               - np.cross(self.wUg, ug, axis=0) - np.cross(wug, self.Ug, axis=0))
        du = e3 * g.leray(g.from_grid(mom))
        db = e3 * g.curl(g.from_grid(np.cross(self.Ug + ug, bg, axis=0)))
        return du, db

    def full_rhs(self, u, b):
        du, db = self.explicit(u, b)
        return du + self.lin_u * u, db + self.lin_b * b

    # --- stepping
    def stability_number(self, dt, amplitude=0.0):
        """Explicit-gain bound for the ETD step.

        Two limits matter: slow large-scale modes advected by the flow
        (dt eps^-3 |U|_inf K_min) and the fixed-point contraction of the
        diffusion-slaved cell-scale modes (|U|_inf / (2 pi)).
        """
        g = self.grid
        speed = self.umax + amplitude
        kmin = float(np.min(2 * np.pi / g.T))
        return float(max(dt * speed * kmin / self.epsilon ** 3, speed / (2 * np.pi)))

    def _coefs(self, dt):
        if dt not in self._cache:
            out = []
            for lin in (self.lin_u, self.lin_b):
                z = lin * dt
                out.append((np.exp(z), dt * phi1(z), dt * phi2(z)))
            self._cache = {dt: out}
        return self._cache[dt]

    def step_arrays(self, u, b, dt):
        (Eu, P1u, P2u), (Eb, P1b, P2b) = self._coefs(dt)
        nu0, nb0 = self.explicit(u, b)
        ua = Eu * u + P1u * nu0
        ba = Eb * b + P1b * nb0
        nua, nba = self.explicit(ua, ba)
        u1 = self.grid.leray(ua + P2u * (nua - nu0))
        b1 = self.grid.leray(ba + P2b * (nba - nb0))
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(b1))):
            raise NanDetected("non-finite state")
        return u1, b1


def step(state, system, dt, c=0.5):
    ug = state.grid.to_grid(state.u)
    gnum = system.stability_number(dt, float(np.sqrt(np.sum(ug ** 2, axis=0)).max()))
    if gnum > c:
        raise StabilityViolation(f"explicit gain {gnum:.3f} exceeds {c} at dt={dt}")
    u, b = system.step_arrays(state.u, state.b, dt)
    return replace(state, u=u, b=b, t=state.t + dt)


# ---------------------------------------------------------------- estimates

def random_state(grid, epsilon, rng, slope=2.0, s=3.0):
    """Random real solenoidal (u, b) with spectrum ~ (1 + |K|^2)^(-slope/2)."""
    st = []
    for _ in range(2):
        c = rng.standard_normal(grid.spec_shape) + 1j * rng.standard_normal(grid.spec_shape)
        c *= (1.0 + grid.K2) ** (-slope / 2) * grid.mask
        c = grid.from_grid(grid.to_grid(c))  # enforce Hermitian symmetry
        st.append(grid.leray(c))
    return MhdState(st[0], st[1], 0.0, epsilon, grid, s)


def q_ratio(state, system, s):
    """|Q|_{L2} / (eps^-3 |U|_{L2}^{1+eta} |U|_{H^s}^{1-eta})."""
    eta = eta_for(s)
    du, db = system.nonlinear_q(state.u, state.b)
    g = state.grid
    qn = np.hypot(g.sobolev(du, 0), g.sobolev(db, 0))
    l2 = state.hs_norm(0.0)
    hs = state.hs_norm(s)
    return float(qn / (system.epsilon ** -3 * l2 ** (1 + eta) * hs ** (1 - eta)))


def interp_check(state, s):
    """Returns |U|_{H^r} / (|U|_{L2}^eta |U|_{H^s}^{1-eta}) with r = (1 - eta) s (<= 1)."""
    eta = eta_for(s)
    r = (1 - eta) * s
    return state.hs_norm(r) / (state.hs_norm(0.0) ** eta * state.hs_norm(s) ** (1 - eta))


def q_estimate_probe(samples, s, epsilon, seed, U=None, box=(2, 1, 1), points_per_unit=8,
                     slopes=(1.5, 2.5)):
    """Max of the nonlinear-estimate ratio over random solenoidal states."""
    from .fourier_field import abc_flow

    if s <= 2.5:
        raise ValueError("needs s > 5/2")
    grid = BoxGrid(BoxSpec(box), points_per_unit)
    U = abc_flow(1, 1, 1, 2) if U is None else U
    system = MhdSystem(U, grid, epsilon)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(samples):
        slope = rng.uniform(*slopes)
        st = random_state(grid, epsilon, rng, slope, s)
        ratios.append(q_ratio(st, system, s))
    return float(max(ratios)), np.array(ratios)


# ---------------------------------------------------------------- experiment

@dataclass
class InstabilityReport:
    delta_list: list
    thresholds_hit: list
    t_delta: list
    amplitude_curves: list
    threshold: float
    slope_fit: float | None = None
    residual: float | None = None
    shadowing: list = field(default_factory=list)
    lam: complex | None = None

    def as_dict(self):
        return {
            "delta": [fmt(d) for d in self.delta_list],
            "t_delta": [None if t is None else fmt(t) for t in self.t_delta],
            "hit": list(self.thresholds_hit),
            "threshold": fmt(self.threshold),
            "slope_fit": None if self.slope_fit is None else fmt(self.slope_fit),
            "residual": None if self.residual is None else fmt(self.residual),
            "shadowing_max": [fmt(x) for x in self.shadowing],
            "lambda": None if self.lam is None else [fmt(self.lam.real), fmt(self.lam.imag)],
        }


def write_amplitude_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "l2_norm", "hs_norm", "div_u", "div_b"])
        for r in rows:
            w.writerow([fmt(x) for x in r])


def fit_affine(t_delta, deltas):
    """Fit t = a + slope ln(1/delta); residual = max deviation / spread of t."""
    x = np.log(1.0 / np.asarray(deltas, float))
    y = np.asarray(t_delta, float)
    slope, a = np.polyfit(x, y, 1)
    spread = y.max() - y.min()
    resid = float(np.max(np.abs(a + slope * x - y)) / spread) if spread > 0 else float("inf")
    return float(slope), resid


def run_instability(U, mode, epsilon, delta_list, threshold_frac=0.1, s=3.0, dt=1.0,
                    horizon=None, points_per_unit=8, record_every=1, shadow_amp=0.01,
                    c=0.5):
    """Integrate from delta * (0, b_L) until the H^s norm reaches the threshold."""
    if not delta_list:
        raise ValueError("delta_list is empty")
    if mode.box is None:
        raise BoxMismatch("mode has no integer box")
    if list(delta_list) != sorted(delta_list, reverse=True):
        raise ValueError("delta_list must be decreasing")
    grid = BoxGrid(mode.box, points_per_unit)
    system = MhdSystem(U, grid, epsilon)
    b0 = mode_on_box(mode, grid)
    zero = np.zeros_like(b0)
    base = MhdState(zero, b0, 0.0, epsilon, grid, s)
    base = base.scaled(1.0 / base.hs_norm())
    threshold = threshold_frac * grid.sobolev(system.U_hat, s)
    lam = mode.lam.real
    if horizon is None:
        horizon = 3.0 * np.log(threshold / min(delta_list)) / max(lam, 1e-12)
    if system.stability_number(dt) > c:
        raise StabilityViolation(f"dt={dt} violates the explicit gain bound")
    hits, tds, curves, shadows = [], [], [], []
    for delta in delta_list:
        st = base.scaled(delta)
        rows = [(0.0, st.l2_norm(), st.hs_norm(), grid.divergence_defect(st.u) if np.any(st.u) else 0.0,
                 grid.divergence_defect(st.b))]
        prev = (0.0, st.hs_norm())
        t_hit, shadow = None, 0.0
        nsteps = int(np.ceil(horizon / dt))
        for k in range(1, nsteps + 1):
            u, b = system.step_arrays(st.u, st.b, dt)
            st = replace(st, u=u, b=b, t=k * dt)
            hs = st.hs_norm()
            lin_amp = delta * np.exp(lam * st.t)
            if lin_amp <= shadow_amp:
                ref = base.scaled(lin_amp)
                d = np.hypot(grid.sobolev(st.u - ref.u, s), grid.sobolev(st.b - ref.b, s))
                shadow = max(shadow, d / lin_amp)
            if k % record_every == 0 or k == nsteps or hs >= threshold:
                rows.append((st.t, st.l2_norm(), hs, grid.divergence_defect(st.u) if np.any(st.u) else 0.0,
                             grid.divergence_defect(st.b)))
            if hs >= threshold:
                # log-linear interpolation inside the last step
                t0, h0 = prev
                frac = np.log(threshold / h0) / np.log(hs / h0)
                t_hit = t0 + frac * dt
                break
            prev = (st.t, hs)
        if t_hit is None:
            log.warning("%s: delta=%g below threshold at t=%g", HorizonExceeded.__name__,
                        delta, st.t)
        log.info("delta=%g t_delta=%s", delta, t_hit)
        hits.append(t_hit is not None)
        tds.append(t_hit)
        curves.append(rows)
        shadows.append(shadow)
    report = InstabilityReport(list(delta_list), hits, tds, curves, threshold,
                               shadowing=shadows, lam=mode.lam)
    if all(hits) and len(delta_list) >= 2:
        report.slope_fit, report.residual = fit_affine(tds, delta_list)
    return report
