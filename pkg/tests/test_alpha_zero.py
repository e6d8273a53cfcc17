import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alpha_dynamo import alpha_zero as az
from alpha_dynamo import fourier_field as ff

seeds = st.integers(0, 2 ** 32 - 1)
amps = st.floats(-2.0, 2.0)

LAM0 = 1 / (16 * np.pi ** 2)
XI0 = 1 / (4 * np.pi)


def test_cell_solve_zero_flow():
    U = ff.make_profile(np.zeros((3, 5, 5, 5), complex), 2)
    assert az.cell_solve(U, [1, 2, 3]).norm() == 0


def test_cell_solve_single_wave():
    A = 0.8
    U = ff.abc_flow(A, 0, 0, 2)
    bt = az.cell_solve(U, [0, 0, 1])
    # expected (A / 2 pi)(cos 2 pi t3, -sin 2 pi t3, 0)
    M = 8
    th = np.arange(M) / M
    t3 = np.meshgrid(th, th, th, indexing="ij")[2]
    want = A / (2 * np.pi) * np.stack([np.cos(2 * np.pi * t3), -np.sin(2 * np.pi * t3), 0 * t3])
    assert np.max(np.abs(bt.to_grid(M) - want)) < 1e-15
    assert az.cell_solve(U, [1, 0, 0]).norm() < 1e-17


@given(seeds, st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_cell_solve_residual(seed, bbar):
    U = ff.random_profile(3, seed)
    bt = az.cell_solve(U, bbar)
    kv = ff.wavevectors(3)
    lap = -(2 * np.pi) ** 2 * np.sum(kv ** 2, axis=0) * bt.coeffs
    src = az._cell_source_coeffs(U, bbar)
    curl = 2j * np.pi * np.cross(kv, src, axis=0)
    assert np.max(np.abs(lap + curl)) <= 1e-12 * max(np.max(np.abs(curl)), 1e-300)
    assert np.all(ff.mean_part(bt) == 0)


def test_alpha_zero_flow():
    U = ff.make_profile(np.zeros((3, 5, 5, 5), complex), 2)
    assert np.all(az.alpha(U).entries == 0)


@given(amps, amps, amps)
def test_alpha_abc_closed_form(A, B, C):
    U = ff.abc_flow(A, B, C, 3)
    want = -np.diag([B * B, C * C, A * A]) / (2 * np.pi)
    for a in (az.alpha(U), az.alpha_fourier_sum(U)):
        assert np.max(np.abs(a.entries - want)) <= 1e-12 * max(np.abs(want).max(), 1e-300) + 1e-300


@given(seeds, st.floats(-3, 3))
def test_alpha_quadratic_in_U(seed, c):
    U = ff.random_profile(3, seed)
    cU = ff.make_profile(c * U.coeffs, 3)
    a1, a2 = az.alpha(U).entries, az.alpha(cU).entries
    assert np.max(np.abs(a2 - c * c * a1)) <= 1e-13 * max(np.abs(a1).max(), 1e-300) * max(c * c, 1)


@given(seeds, st.floats(2.0, 6.0))
def test_alpha_real_symmetric_and_two_paths(seed, decay):
    U = ff.random_profile(4, seed, decay=decay)
    a = az.alpha(U)
    assert a.is_real_symmetric(1e-10)
    b = az.alpha_fourier_sum(U)
    assert np.max(np.abs(a.entries - b.entries)) <= 1e-12 * a.scale


def test_alpha_matrix_defects():
    a = az.AlphaMatrix(np.array([[1, 2j, 0], [0, 1, 0], [0, 0, 1]], complex))
    assert a.hermiticity_defect == 2
    assert a.imag_defect == 2
    assert not a.is_real_symmetric()


# ---------------------------------------------------------------- mean matrix

def test_mean_matrix_zero_xi():
    assert np.all(az.mean_matrix(np.eye(3), np.zeros(3)) == 0)


@given(st.floats(-3, 3), st.floats(0.01, 2))
def test_mean_matrix_isotropic(a, r):
    w = np.sort_complex(np.linalg.eigvals(az.mean_matrix(a * np.eye(3), [r, 0, 0])))
    want = np.sort_complex(np.array([-r * r, a * r - r * r, -a * r - r * r], complex))
    assert np.allclose(w, want, atol=1e-12)


@given(seeds, st.floats(0.05, 1))
def test_mean_eigenvectors_transverse(seed, r):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((3, 3))
    S = S + S.T
    e = rng.standard_normal(3)
    xi = r * e / np.linalg.norm(e)
    w, v = np.linalg.eig(az.mean_matrix(S, xi))
    for i in range(3):
        if abs(w[i] + xi @ xi) > 1e-6:
            assert abs(xi @ v[:, i]) < 1e-10


@given(seeds)
def test_direction_eigenvalues_are_0_pm_gamma(seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((3, 3))
    S = S + S.T
    e = rng.standard_normal(3)
    e /= np.linalg.norm(e)
    w = np.linalg.eigvals(1j * az.cross_matrix(e) @ S)
    assert abs(np.sum(w)) < 1e-12
    assert np.min(np.abs(w)) < 1e-12
    w = w[np.argsort(np.abs(w))][1:]
    assert abs(w[0] + w[1]) < 1e-12
    g = w[0]
    assert abs(g.real) < 1e-12 or abs(g.imag) < 1e-12


# ---------------------------------------------------------------- selection

def test_select_xi_abc():
    U = ff.abc_flow(1, 1, 1, 2)
    sol = az.select_xi(az.alpha(U))
    assert abs(sol.lam_opt.real - LAM0) <= 1e-10
    assert abs(np.linalg.norm(sol.xi_opt) - XI0) <= 1e-10
    assert sol.gamma == pytest.approx(1 / (2 * np.pi), rel=1e-12)
    assert np.array_equal(sol.direction, [1.0, 0.0, 0.0])
    assert abs(sol.xi @ sol.b0) < 1e-10
    assert sol.growing and not sol.snapped


def test_select_xi_snapped():
    sol = az.select_xi(-np.eye(3) / (2 * np.pi), denominator_bound=100)
    assert sol.xi[0] == pytest.approx(2 * np.pi / 79, rel=1e-15)
    assert sol.xi[1] == 0 and sol.xi[2] == 0
    assert sol.lam.real > 0.99 * 0.00633
    assert str(sol.fractions[0]) == "1/79"
    r = sol.xi[0]
    assert sol.lam.real == pytest.approx(sol.gamma * r - r * r, rel=1e-12)


def test_select_xi_optimality():
    a = -np.eye(3) / (2 * np.pi)
    sol = az.select_xi(a)
    e, r = sol.direction, np.linalg.norm(sol.xi_opt)

    def lam(rr):
        return max(np.linalg.eigvals(az.mean_matrix(a, rr * e)).real)

    h = 1e-5
    assert abs((lam(r + h) - lam(r - h)) / (2 * h)) <= 1e-8


def test_no_unstable_direction():
    with pytest.raises(az.NoUnstableDirection):
        az.select_xi(np.diag([1.0, -1.0, 0.0]))
    with pytest.raises(az.NoUnstableDirection):
        az.select_xi(np.zeros((3, 3)))


def test_snap_destroying_growth():
    with pytest.raises(az.SnapDestroyedGrowth):
        az.select_xi(-np.eye(3) / (2 * np.pi), denominator_bound=1)


@given(seeds)
def test_select_xi_random_symmetric(seed):
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((3, 3))
    S = S + S.T
    try:
        sol = az.select_xi(S, direction_samples=100)
    except az.NoUnstableDirection:
        return
    assert sol.lam_opt.real == pytest.approx(sol.gamma ** 2 / 4, rel=1e-10)
    assert abs(sol.xi_opt @ sol.b0) < 1e-10
    assert np.linalg.norm(sol.b0) == pytest.approx(1.0)


def test_fibonacci_sphere_unit():
    p = az.fibonacci_sphere(50)
    assert p.shape == (50, 3)
    assert np.allclose(np.linalg.norm(p, axis=1), 1)
    assert az.fibonacci_sphere(0).shape == (0, 3)
