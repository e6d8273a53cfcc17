"""Fast invariant suite behind ``alpha-dynamo check``.

Each check returns a CheckResult; nothing here raises on a failed invariant.
The whole suite runs in well under a minute.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import alpha_zero as az
from . import continuation as co
from . import fourier_field as ff
from . import induction_dns as dns
from . import mhd_dns as md


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def direct_wedge(a, b, N):
    """Truncated convolution of a ^ b by explicit double sum (small N only)."""
    out = np.zeros_like(a)
    idx = ff.wavevectors(N).reshape(3, -1).T.astype(int)
    for p in idx:
        ap = a[:, p[0] + N, p[1] + N, p[2] + N]
        if not np.any(ap):
            continue
        for q in idx:
            k = p + q
            if np.any(np.abs(k) > N):
                continue
            bq = b[:, q[0] + N, q[1] + N, q[2] + N]
            out[:, k[0] + N, k[1] + N, k[2] + N] += np.cross(ap, bq)
    return out


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def check_wedge(rng):
    N = 2
    a = ff.random_profile(N, rng).coeffs
    b = ff.random_profile(N, rng).coeffs
    err = _rel(ff.wedge_coeffs(a, b, N), direct_wedge(a, b, N))
    return CheckResult("wedge_vs_direct_sum", err <= 1e-12, f"rel err {err:.2e}")


def check_alpha_abc():
    A, B, C = 1.0, 0.7, 0.4
    U = ff.abc_flow(A, B, C, 4)
    want = -np.diag([B * B, C * C, A * A]) / (2 * np.pi)
    e1 = _rel(az.alpha(U).entries, want)
    e2 = _rel(az.alpha_fourier_sum(U).entries, want)
    ok = max(e1, e2) <= 1e-12
    return CheckResult("alpha_abc_closed_form", ok, f"cell path {e1:.2e}, sum path {e2:.2e}")


def check_alpha_random(rng, samples):
    worst_sym, worst_path = 0.0, 0.0
    for _ in range(samples):
        U = ff.random_profile(6, rng)
        a = az.alpha(U)
        worst_sym = max(worst_sym, max(a.hermiticity_defect, a.imag_defect) / a.scale)
        worst_path = max(worst_path, float(np.max(np.abs(a.entries - az.alpha_fourier_sum(U).entries)) / a.scale))
    return [
        CheckResult("alpha_real_symmetric", worst_sym <= 1e-10, f"max rel defect {worst_sym:.2e}"),
        CheckResult("alpha_two_paths", worst_path <= 1e-12, f"max rel diff {worst_path:.2e}"),
    ]


def check_roundtrip(rng):
    F = ff.random_profile(3, rng).field
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "f.field")
        ff.save_field(F, p)
        G = ff.load_field(p)
    ok = G.N == F.N and G.reality_flag == F.reality_flag and np.array_equal(G.coeffs, F.coeffs)
    return CheckResult("field_file_roundtrip", ok, "bit-exact" if ok else "mismatch")


def check_selection():
    U = ff.abc_flow(1, 1, 1, 2)
    a = az.alpha(U)
    sol = az.select_xi(a)
    e_lam = abs(sol.lam_opt.real - 1 / (16 * np.pi ** 2))
    e_xi = abs(np.linalg.norm(sol.xi_opt) - 1 / (4 * np.pi))
    scale = co.dispersion_scale(a.entries, sol.xi_opt, sol.lam_opt)
    f0 = abs(co.dispersion(U, sol.xi_opt, 0.0, sol.lam_opt)) / scale
    ok = e_lam <= 1e-10 and e_xi <= 1e-10 and f0 <= 1e-12
    return CheckResult("abc_mean_mode", ok, f"|dlam| {e_lam:.1e}, |dxi| {e_xi:.1e}, f/scale {f0:.1e}")


def check_mode_residual():
    U = ff.abc_flow(1, 1, 1, 3)
    sol = az.select_xi(az.alpha(U), denominator_bound=100)
    lam, _, _ = co.newton_lambda(U, sol.xi, 0.25, sol.lam)
    mode = co.build_mode(U, sol.xi, 0.25, lam)
    r = dns.validate_mode(mode, U)
    return CheckResult("mode_operator_residual", r <= 1e-8, f"residual {r:.2e}")


def check_dns_pure_diffusion(rng):
    U = ff.make_profile(np.zeros((3, 5, 5, 5), complex), 2)
    xi = np.array([0.3, 0.0, 0.1])
    op = dns.BlochInduction(U, xi, 0.5, 2)
    B = dns.random_solenoidal(op, rng)
    dt = 0.01
    err = _rel(op.step_coeffs(B, dt), np.exp(op.lin * dt) * B)
    return CheckResult("dns_pure_diffusion_exact", err <= 1e-14, f"rel err {err:.2e}")


def check_dns_linearity(rng):
    U = ff.abc_flow(1, 1, 1, 3)
    op = dns.BlochInduction(U, [0.08, 0, 0], 0.25, 3)
    B1, B2 = dns.random_solenoidal(op, rng), dns.random_solenoidal(op, rng)
    a, b = 0.3 - 0.2j, 1.7
    dt = 0.05
    lhs = op.step_coeffs(a * B1 + b * B2, dt)
    rhs = a * op.step_coeffs(B1, dt) + b * op.step_coeffs(B2, dt)
    err = _rel(lhs, rhs)
    return CheckResult("dns_linearity", err <= 1e-12, f"rel err {err:.2e}")


def check_mhd(rng):
    grid = md.BoxGrid((2, 1, 1), 8)
    sysm = md.MhdSystem(ff.abc_flow(1, 1, 1, 1), grid, 0.5)
    st = md.random_state(grid, 0.5, rng)
    G = sysm.linear_rhs(st.u, st.b)
    Q = sysm.nonlinear_q(st.u, st.b)
    F = sysm.full_rhs(st.u, st.b)
    dec = max(_rel(G[0] + Q[0], F[0]), _rel(G[1] + Q[1], F[1]))
    Qc = sysm.nonlinear_q(3.0 * st.u, 3.0 * st.b)
    bil = max(_rel(Qc[0], 9.0 * Q[0]), _rel(Qc[1], 9.0 * Q[1]))
    z = np.zeros(grid.spec_shape, complex)
    u, b = z, z
    for _ in range(3):
        u, b = sysm.step_arrays(u, b, 0.5)
    eq = float(max(np.abs(u).max(), np.abs(b).max()))
    u1, b1 = sysm.step_arrays(st.u, st.b, 0.5)
    div = max(grid.divergence_defect(u1), grid.divergence_defect(b1))
    return [
        CheckResult("mhd_rhs_decomposition", dec <= 1e-12, f"rel err {dec:.2e}"),
        CheckResult("mhd_bilinearity", bil <= 1e-12, f"rel err {bil:.2e}"),
        CheckResult("mhd_zero_equilibrium", eq == 0.0, f"max |state| {eq:.1e}"),
        CheckResult("mhd_divergence", div <= 1e-10, f"defect {div:.2e}"),
    ]


def check_interpolation(rng, samples):
    grid = md.BoxGrid((2, 1, 1), 8)
    worst = max(md.interp_check(md.random_state(grid, 0.5, rng, rng.uniform(1.5, 4.0)), 3.0)
                for _ in range(samples))
    return CheckResult("interpolation_constant_one", worst <= 1 + 1e-12, f"max ratio {worst:.6f}")


def run_all(samples=20, seed=0):
    rng = np.random.default_rng(seed)
    out = [check_wedge(rng), check_alpha_abc()]
    out += check_alpha_random(rng, samples)
    out += [check_roundtrip(rng), check_selection(), check_mode_residual(),
            check_dns_pure_diffusion(rng), check_dns_linearity(rng)]
    out += check_mhd(rng)
    out.append(check_interpolation(rng, samples))
    return out
