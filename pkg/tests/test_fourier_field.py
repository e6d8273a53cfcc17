import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alpha_dynamo import fourier_field as ff
from alpha_dynamo.checks import direct_wedge

seeds = st.integers(0, 2 ** 32 - 1)


def random_coeffs(rng, N, real=True):
    n = 2 * N + 1
    c = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))
    if real:
        c = 0.5 * (c + np.conj(c[:, ::-1, ::-1, ::-1]))
    return c


# ---------------------------------------------------------------- construction

def test_abc_is_accepted_with_exact_zero_mean_and_divergence():
    U = ff.abc_flow(1, 1, 1, 4)
    assert np.all(U.field.coeff((0, 0, 0)) == 0)
    assert U.field.divergence_defect() == 0.0
    assert U.field.hermitian_defect() == 0.0


def test_nonzero_mean_rejected():
    with pytest.raises(ff.NonzeroMean):
        ff.make_profile({(0, 0, 0): (1, 0, 0)}, 2)


def test_gradient_mode_rejected():
    with pytest.raises(ff.NotDivergenceFree):
        ff.make_profile({(1, 0, 0): (1, 0, 0), (-1, 0, 0): (1, 0, 0)}, 2)


def test_non_hermitian_rejected():
    with pytest.raises(ff.NotReal):
        ff.make_profile({(1, 0, 0): (0, 1, 0)}, 2)


def test_mode_outside_truncation_rejected():
    with pytest.raises(ValueError):
        ff.SpectralVectorField.from_modes({(3, 0, 0): (0, 1, 0)}, 2)


def test_abc_zero_and_single_wave():
    assert ff.abc_flow(0, 0, 0, 4).field.norm() == 0.0
    c = ff.abc_flow(1, 0, 0, 4).coeffs
    nz = np.argwhere(np.linalg.norm(c, axis=0) > 0) - 4
    assert sorted(map(tuple, nz)) == [(0, 0, -1), (0, 0, 1)]


def test_abc_grid_values_match_formula():
    A, B, C = 1.0, 0.6, 0.3
    U = ff.abc_flow(A, B, C, 1)
    M = 8
    g = U.field.to_grid(M)
    th = np.arange(M) / M
    t1, t2, t3 = np.meshgrid(th, th, th, indexing="ij")
    s, c = np.sin, np.cos
    tp = 2 * np.pi
    want = np.stack([A * s(tp * t3) + C * c(tp * t2),
                     B * s(tp * t1) + A * c(tp * t3),
                     C * s(tp * t2) + B * c(tp * t1)])
    assert np.max(np.abs(g - want)) < 1e-14


def test_abc_is_beltrami():
    U = ff.abc_flow(1, 1, 1, 4)
    curl = ff.curl_bloch(U.field)
    assert np.max(np.abs(curl.coeffs - 2 * np.pi * U.coeffs)) < 1e-14


def test_abc_seminorm_zero_is_sqrt3():
    assert ff.seminorm(ff.abc_flow(1, 1, 1, 4).field, 0) == pytest.approx(np.sqrt(3), rel=1e-15)


@given(seeds, st.integers(1, 4), st.floats(1.0, 6.0))
def test_random_profile_is_valid(seed, N, decay):
    U = ff.random_profile(N, seed, decay=decay)
    assert U.field.hermitian_defect() <= 1e-14
    assert U.field.divergence_defect() <= 1e-12
    assert np.all(U.field.coeff((0, 0, 0)) == 0)


def test_boxspec_validation():
    assert ff.BoxSpec((3, 1, 2)).T == (3, 1, 2)
    for bad in [(0, 1, 1), (1.5, 1, 1), (1, 1)]:
        with pytest.raises(ValueError):
            ff.BoxSpec(bad)


# ---------------------------------------------------------------- splitting

def test_mean_and_fluct_of_constant():
    F = ff.SpectralVectorField.from_modes({(0, 0, 0): (1, 2, 3)}, 2)
    assert np.array_equal(ff.mean_part(F), [1, 2, 3])
    assert ff.fluct_part(F).norm() == 0


def test_single_mode_is_pure_fluctuation():
    F = ff.SpectralVectorField.from_modes({(1, -1, 0): (1, 1j, 0)}, 2)
    assert np.all(ff.mean_part(F) == 0)
    assert np.array_equal(ff.fluct_part(F).coeffs, F.coeffs)


@given(seeds)
def test_split_is_exact(seed):
    F = ff.SpectralVectorField(2, random_coeffs(np.random.default_rng(seed), 2, False))
    fl = ff.fluct_part(F)
    assert np.all(ff.mean_part(fl) == 0)
    rebuilt = fl.coeffs.copy()
    rebuilt[:, 2, 2, 2] += ff.mean_part(F)
    assert np.array_equal(rebuilt, F.coeffs)


# ---------------------------------------------------------------- curl

def test_curl_of_constant():
    F = ff.SpectralVectorField.from_modes({(0, 0, 0): (1, 2, 3)}, 1)
    assert ff.curl_bloch(F).norm() == 0
    kappa = np.array([0.01, -0.02, 0.005])
    out = ff.curl_bloch(F, kappa)
    assert np.allclose(ff.mean_part(out), 1j * np.cross(kappa, [1, 2, 3]), atol=1e-17)


@given(seeds, st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_curl_of_phase_gradient_vanishes(seed, kappa):
    rng = np.random.default_rng(seed)
    N = 3
    q = 2 * np.pi * ff.wavevectors(N) + np.asarray(kappa)[:, None, None, None]
    g = rng.standard_normal((7, 7, 7)) + 1j * rng.standard_normal((7, 7, 7))
    F = ff.SpectralVectorField(N, 1j * q * g)
    out = ff.curl_bloch(F, kappa)
    assert out.norm() <= 1e-12 * F.norm()


# ---------------------------------------------------------------- wedge

def test_wedge_of_constants():
    a = ff.SpectralVectorField.from_modes({(0, 0, 0): (1, 2, 3)}, 1)
    b = ff.SpectralVectorField.from_modes({(0, 0, 0): (-1, 0.5, 2)}, 1)
    w = ff.wedge(a, b)
    assert np.allclose(ff.mean_part(w), np.cross([1, 2, 3], [-1, 0.5, 2]), atol=1e-15)
    assert ff.fluct_part(w).norm() < 1e-15


@given(seeds)
def test_wedge_self_has_zero_mean(seed):
    U = ff.random_profile(3, seed)
    assert np.max(np.abs(ff.mean_part(ff.wedge(U.field, U.field)))) < 1e-15


@given(seeds, st.integers(1, 3))
def test_wedge_matches_direct_convolution(seed, N):
    rng = np.random.default_rng(seed)
    a = random_coeffs(rng, N, False)
    b = random_coeffs(rng, N, False)
    want = direct_wedge(a, b, N)
    got = ff.wedge_coeffs(a, b, N)
    assert np.max(np.abs(got - want)) <= 1e-12 * np.max(np.abs(want))


def test_minimal_padding_aliases():
    # a (2N+1)-point grid is not enough: the oracle sees the aliasing
    rng = np.random.default_rng(7)
    N = 2
    a, b = random_coeffs(rng, N), random_coeffs(rng, N)
    alias = ff.wedge_coeffs(a, b, N, M=2 * N + 1)
    assert np.max(np.abs(alias - direct_wedge(a, b, N))) > 1e-3


@given(seeds)
def test_wedge_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    A = ff.SpectralVectorField(2, random_coeffs(rng, 2, False))
    B = ff.SpectralVectorField(2, random_coeffs(rng, 2, False))
    assert np.max(np.abs(ff.wedge(A, B).coeffs + ff.wedge(B, A).coeffs)) < 1e-13


@given(seeds)
def test_real_fields_stay_real_on_grid(seed):
    U = ff.random_profile(3, seed)
    g = ff.to_grid(U.coeffs, 11)
    assert np.max(np.abs(g.imag)) <= 1e-12 * np.max(np.abs(g))


@given(seeds)
def test_parseval(seed):
    U = ff.random_profile(3, seed)
    g = ff.to_grid(U.coeffs, 2 * 3 + 2).real
    quad = np.sqrt(np.mean(np.sum(g ** 2, axis=0)))
    assert quad == pytest.approx(ff.l2_norm(U.field), rel=1e-12)


@given(seeds, st.integers(1, 4))
def test_grid_roundtrip(seed, N):
    c = random_coeffs(np.random.default_rng(seed), N, False)
    back = ff.from_grid(ff.to_grid(c, ff.dealiased_size(N)), N)
    assert np.max(np.abs(back - c)) < 1e-13


def test_resize_pads_and_truncates():
    U = ff.abc_flow(1, 1, 1, 1)
    big = U.field.resize(4)
    assert big.coeff((0, 0, 1)).tolist() == U.field.coeff((0, 0, 1)).tolist()
    assert np.array_equal(big.resize(1).coeffs, U.coeffs)


# ---------------------------------------------------------------- Leray

def test_leray_examples():
    grad = ff.SpectralVectorField.from_modes({(1, 0, 0): (1, 0, 0)}, 1)
    assert ff.leray_project(grad).norm() == 0
    sol = ff.SpectralVectorField.from_modes({(1, 0, 0): (0, 1, 0)}, 1)
    assert np.array_equal(ff.leray_project(sol).coeffs, sol.coeffs)


def test_leray_keeps_mean():
    F = ff.SpectralVectorField.from_modes({(0, 0, 0): (1, 2, 3)}, 1)
    assert np.array_equal(ff.leray_project(F).coeffs, F.coeffs)


@given(seeds)
def test_leray_properties(seed):
    F = ff.SpectralVectorField(3, random_coeffs(np.random.default_rng(seed), 3, False))
    P = ff.leray_project(F)
    PP = ff.leray_project(P)
    assert P.divergence_defect() < 1e-12
    assert np.max(np.abs(PP.coeffs - P.coeffs)) < 1e-14
    assert P.norm() <= F.norm() * (1 + 1e-15)


# ---------------------------------------------------------------- norms

def test_seminorm_examples():
    assert ff.seminorm(ff.SpectralVectorField.zeros(2), 3) == 0
    a = 0.7
    F = ff.SpectralVectorField.from_modes({(1, 0, 0): (0, a, 0), (-1, 0, 0): (0, a, 0)}, 2)
    assert ff.seminorm(F, 1) == pytest.approx(np.sqrt(2) * a, rel=1e-15)


def test_sobolev_single_mode():
    T = ff.BoxSpec((4, 1, 2))
    F = ff.SpectralVectorField.from_modes({(1, 0, 1): (0, 0.5, 0), (-1, 0, -1): (0, 0.5, 0)}, 2)
    K2 = (2 * np.pi) ** 2 * (1 / 16 + 1 / 4)
    s = 2.5
    want = (1 + K2) ** (s / 2) * 0.5 * np.sqrt(2)
    assert ff.sobolev_norm(F, s, T) == pytest.approx(want, rel=1e-14)
    assert ff.sobolev_norm(F, 0, T) == pytest.approx(ff.l2_norm(F), rel=1e-15)


# ---------------------------------------------------------------- files

@given(seeds, st.integers(1, 3), st.booleans())
def test_field_file_roundtrip_bit_exact(tmp_path_factory, seed, N, real):
    path = tmp_path_factory.mktemp("f") / "x.field"
    F = ff.SpectralVectorField(N, random_coeffs(np.random.default_rng(seed), N, real), real)
    ff.save_field(F, path)
    G = ff.load_field(path)
    assert G.N == N and G.reality_flag == real
    assert G.coeffs.tobytes() == F.coeffs.tobytes()


def test_field_file_layout(tmp_path):
    F = ff.SpectralVectorField.from_modes({(-1, 0, 1): (1 + 2j, 3, -4j)}, 1)
    p = tmp_path / "x.field"
    ff.save_field(F, p)
    head, raw = p.read_bytes().split(b"\n", 1)
    m = json.loads(head)
    assert m == {"format_version": 1, "N": 1, "reality_flag": False,
                 "layout": "lex_kx_ky_kz", "scalar": "f64le"}
    vals = np.frombuffer(raw, "<f8")
    assert vals.size == 2 * 3 * 27
    # k = (-1, 0, 1) is entry (0 * 9 + 1 * 3 + 2) in lexicographic order
    j = (0 * 9 + 1 * 3 + 2) * 6
    assert vals[j:j + 6].tolist() == [1, 2, 3, 0, 0, -4]


def test_corrupt_field_files(tmp_path):
    F = ff.abc_flow(1, 1, 1, 1).field
    p = tmp_path / "x.field"
    ff.save_field(F, p)
    data = p.read_bytes()
    (tmp_path / "short.field").write_bytes(data[:-8])
    (tmp_path / "nohead.field").write_bytes(b"garbage")
    (tmp_path / "badjson.field").write_bytes(b"{nope\n" + data.split(b"\n", 1)[1])
    for name in ["short", "nohead", "badjson"]:
        with pytest.raises(ff.FieldFormatError):
            ff.load_field(tmp_path / f"{name}.field")


def test_fields_are_immutable():
    F = ff.abc_flow(1, 1, 1, 1).field
    with pytest.raises(ValueError):
        F.coeffs[0, 0, 0, 0] = 1
