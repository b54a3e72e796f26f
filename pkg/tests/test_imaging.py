import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_directions
from magloc import forward, imaging, sphharm
from magloc.errors import (
    DegenerateDataError,
    DegeneratePointError,
    DivergenceDomainError,
    IndexDomainError,
    NeedsQuadratureError,
)

Z1 = np.array([0.6, 0.2, 0.45])

# degree-2 radial coefficients <x^ . H, Y_2^m>, m = -2..2, of a unit dipole e1 at
# (0.75, 0, 0) seen on |x| = 7; frozen from an adaptive dblquad oracle with sympy
# harmonics (imaginary parts are below 1e-19)
DIPOLE_Q_ORACLE = np.array(
    [-1.4479249555221591e-04, 0.0, 1.1822257756237733e-04, 0.0, -1.4479249555221591e-04]
)

# min over complex unit y of max_m |y^T D_m P^|, frozen from a 200k-sample,
# 20-start refinement (seed 5)
KAPPA_E3 = 0.8090398349558907
KAPPA_CIRCULAR = 0.6324555320336758  # P^ = (1, i, 0) / sqrt 2


def clean(z=Z1, delta=0.02, degree=32, **kw):
    rule = sphharm.build_quadrature(degree)
    sc = forward.Scenario([forward.Anomaly(np.asarray(z, float), delta)], **kw)
    return sc, rule, forward.synthesize(sc, rule)


@pytest.fixture(scope="module")
def data():
    sc, rule, meas = clean()
    return sc, rule, meas, imaging.projection_data(meas)


def radial_measurement(rule, f):
    return forward.Measurement(rule.nodes, 7.0, f[:, None] * rule.nodes, rule.weights)


def test_projections_of_zero(rule16):
    meas = forward.Measurement(rule16.nodes, 7.0, np.zeros((len(rule16), 3)), rule16.weights)
    assert np.all(imaging.compute_P(meas) == 0)
    assert np.all(imaging.compute_Q(meas) == 0)


def test_P_of_radial_unit_field(rule16):
    meas = forward.Measurement(rule16.nodes, 7.0, rule16.nodes.astype(complex), rule16.weights)
    assert np.abs(imaging.compute_P(meas)).max() < 1e-14


def test_Q_of_y21(rule16):
    meas = radial_measurement(rule16, sphharm.eval_scalar_sh(2, 1, rule16.nodes))
    np.testing.assert_allclose(imaging.compute_Q(meas), [0, 0, 0, 1, 0], atol=1e-10)


def test_projections_need_weights(rule16):
    meas = forward.Measurement(rule16.nodes, 7.0, np.ones((len(rule16), 3)))
    with pytest.raises(NeedsQuadratureError):
        imaging.compute_P(meas)
    half = forward.restrict(forward.Measurement(rule16.nodes, 7.0, np.ones((len(rule16), 3)), rule16.weights),
                            "hemi:+z", keep_weights=True)
    with pytest.raises(NeedsQuadratureError):
        imaging.compute_Q(half)
    assert np.all(np.isfinite(imaging.compute_Q(half, allow_partial=True)))


@pytest.mark.parametrize("z", [(0.6, 0.2, 0.45), (0.0, -0.7, 0.1), (-0.5, 0.5, -0.5), (0.99, 0.0, 0.0)])
def test_P_identity_corrected(z):
    sc, rule, meas = clean(z, degree=16)
    expected = -(2.0 / 3.0) * sc.moments()[0] / sc.R0**3
    got = imaging.compute_P(meas)
    assert np.linalg.norm(got - expected) / np.linalg.norm(expected) <= 1e-8


def test_P_literal_prefactor_is_off_by_four(data):
    sc, rule, meas, pd = data
    literal = -sc.moments()[0] / (6 * sc.R0**3)
    np.testing.assert_allclose(pd.P / literal, 4.0, rtol=1e-8)


def test_Q_equals_Qz_at_truth(data):
    sc, rule, meas, pd = data
    qz = imaging.compute_Qz(Z1, pd.P, pd.R0, rule)
    assert np.linalg.norm(pd.Q - qz) / np.linalg.norm(pd.Q) <= 1e-8


def test_literal_qz_prefactor_misses_by_four_ninths(data):
    sc, rule, meas, pd = data
    lit = imaging.compute_Qz(Z1, pd.P, pd.R0, rule, imaging.LITERAL_QZ_SCALE)
    np.testing.assert_allclose(lit, (4.0 / 9.0) * pd.Q, rtol=1e-8)


def test_T_homogeneous(rule16, rng):
    for z in rng.standard_normal((5, 3)):
        np.testing.assert_allclose(
            imaging.compute_T_tilde(2 * z, rule16).T, 2 * imaging.compute_T_tilde(z, rule16).T, atol=1e-14
        )


def test_T_origin():
    with pytest.raises(DegeneratePointError):
        imaging.compute_T_tilde(np.zeros(3), sphharm.build_quadrature(8))


def test_T_row_identity(rule16):
    z = np.array([0.3, 0.5, -0.2])
    T = imaging.compute_T_tilde(z, rule16).T
    zhat = z / np.linalg.norm(z)
    zt = np.array([np.conj(sphharm.eval_scalar_sh(1, h, zhat)) * np.linalg.norm(z) for h in (-1, 0, 1)])
    dm = imaging.d_matrices(imaging.n_matrices())
    for m in range(-2, 3):
        np.testing.assert_allclose(T[m + 2], zt @ dm[m], atol=1e-10)


@given(st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_T_row_identity_property(z):
    z = np.array(z)
    rule = sphharm.build_quadrature(8)
    T = imaging.compute_T_tilde(z, rule).T
    D = imaging.d_matrices(imaging.n_matrices()).D
    np.testing.assert_allclose(T, np.einsum("h,mhj->mj", imaging.z_tilde(z), D), atol=1e-10)


def test_T_matches_dipole_expansion_oracle(rule16):
    # Q = -T(z) p / R0^4 for a unit dipole p at z
    T = imaging.compute_T_tilde(np.array([0.75, 0, 0]), rule16).T
    got = T @ np.array([1.0, 0, 0])
    np.testing.assert_allclose(got, -(7.0**4) * DIPOLE_Q_ORACLE, rtol=1e-8, atol=1e-8)


def test_Qz_linear(data):
    sc, rule, meas, pd = data
    z = np.array([0.1, -0.6, 0.3])
    assert np.all(imaging.compute_Qz(z, np.zeros(3), 7.0, rule) == 0)
    np.testing.assert_allclose(
        imaging.compute_Qz(z, 2 * pd.P, 7.0, rule), 2 * imaging.compute_Qz(z, pd.P, 7.0, rule), rtol=1e-15
    )


def test_indicator_distance_law(data):
    sc, rule, meas, pd = data
    e1 = np.array([1.0, 0, 0])
    ratio = imaging.indicator(Z1 + 0.05 * e1, pd, rule) / imaging.indicator(Z1 + 0.1 * e1, pd, rule)
    assert abs(ratio - 2) <= 0.5


def test_indicator_monotone_along_ray(data):
    sc, rule, meas, pd = data
    vals = [imaging.indicator(Z1 + t * np.array([0, 1.0, 0]), pd, rule) for t in (0.4, 0.2, 0.1, 0.05)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_indicator_saturates_at_truth(data):
    sc, rule, meas, pd = data
    vals, sat = imaging.evaluate_indicator(np.array([Z1, Z1 + 0.1]), pd, rule)
    assert sat[0] and not sat[1]
    assert np.isfinite(vals[0]) and vals[0] > 1e6 * vals[1]


def test_indicator_far_field_bound(data):
    sc, rule, meas, pd = data
    kappa = imaging.min_bound_constant(pd.P / np.linalg.norm(pd.P), imaging.d_matrices(imaging.n_matrices()))
    for u in random_directions(np.random.default_rng(1), 20):
        z = Z1 + 0.4 * u
        if np.linalg.norm(z) == 0:
            continue
        assert imaging.indicator(z, pd, rule) <= imaging.indicator_bound(z, Z1, kappa.value)


def test_indicator_zero_signal(rule16):
    pd = imaging.ProjectionData(np.zeros(3, complex), np.ones(5, complex), 7.0)
    with pytest.raises(DegenerateDataError):
        imaging.indicator(Z1, pd, rule16)
    with pytest.raises(DegenerateDataError):
        imaging.ProjectionData(np.array([np.nan, 0, 0]), np.zeros(5), 7.0)


@pytest.mark.parametrize("factor", [np.exp(0.7j), -1.0, 1j, 3.0, 1e-3, 2.5 * np.exp(-2.1j)])
def test_indicator_phase_and_scale_invariance(data, factor):
    sc, rule, meas, pd = data
    pts = Z1 + 0.1 * random_directions(np.random.default_rng(2), 30)
    base, _ = imaging.evaluate_indicator(pts, pd, rule)
    scaled = imaging.projection_data(forward.Measurement(meas.directions, meas.radius, factor * meas.values, meas.weights))
    vals, _ = imaging.evaluate_indicator(pts, scaled, rule)
    np.testing.assert_allclose(vals, base, rtol=1e-12)


def test_n_matrix_entries():
    nm = imaging.n_matrices()
    assert abs(nm.N_0[2, 2] - 2 * np.sqrt(15) / 5) < 1e-15
    assert abs(nm.N_0[2, 2] - 1.549193) < 1e-6
    assert abs(nm.N_minus1[0, 0] - 3 * np.sqrt(5) / 5) < 1e-15
    assert abs(nm.N_minus1[0, 0] - 1.341641) < 1e-6


def test_n_matrices_reproduce_n2_pointwise(rng):
    nm = imaging.n_matrices()
    d = random_directions(rng, 50)
    y2 = np.array([sphharm.eval_scalar_sh(2, m, d) for m in range(-2, 3)])
    err = np.linalg.norm(sphharm.eval_vsh("N", 2, 0, d) - (nm.N_0 @ y2).T, axis=1).max()
    assert err <= 1e-10


def test_derived_n_matrices_match_closed_form():
    der = imaging.derive_n_matrices(sphharm.build_quadrature(5)).stacked()
    lit = imaging.n_matrices().stacked()
    assert np.abs(der - lit).max() <= 1e-10
    for k in range(3):
        assert np.count_nonzero(np.abs(der[k]) > 1e-12) == 5
        np.testing.assert_array_equal(np.abs(der[k]) > 1e-12, np.abs(lit[k]) > 0)


def test_derived_n_matrices_complete(rng):
    der = imaging.derive_n_matrices(sphharm.build_quadrature(6))
    d = random_directions(rng, 20)
    y2 = np.array([sphharm.eval_scalar_sh(2, m, d) for m in range(-2, 3)])
    for k, h in enumerate((-1, 0, 1)):
        resid = sphharm.eval_vsh("N", 2, h, d) - (der.stacked()[k] @ y2).T
        assert np.abs(resid).max() <= 1e-10


def test_derive_needs_degree_five():
    with pytest.raises(ValueError):
        imaging.derive_n_matrices(sphharm.build_quadrature(4))


def test_d_matrix_entry():
    dm = imaging.d_matrices(imaging.n_matrices())
    assert abs(dm[0][0, 0] - (-np.sqrt(30) / 10)) < 1e-15


def test_rank_margin_e1_and_random(rng):
    dm = imaging.d_matrices(imaging.n_matrices())
    assert imaging.rank_margin(np.array([1.0, 0, 0]), dm) >= 1e-6
    a = rng.standard_normal((100, 3)) + 1j * rng.standard_normal((100, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    for v in a:
        cols = np.stack([dm[m] @ v for m in range(-2, 3)], axis=1)
        assert np.linalg.matrix_rank(cols, tol=1e-8 * np.linalg.norm(cols, 2)) == 3


@pytest.mark.parametrize("P_hat,expected", [
    (np.array([0, 0, 1.0]), KAPPA_E3),
    (np.array([1, 1j, 0]) / np.sqrt(2), KAPPA_CIRCULAR),
])
def test_min_bound_constant_values(P_hat, expected):
    b = imaging.min_bound_constant(P_hat, imaging.d_matrices(imaging.n_matrices()))
    assert b.value > 0
    assert abs(b.value - expected) < 1e-6
    assert abs(np.linalg.norm(b.argmin) - 1) < 1e-12
    # coarse sampling and refinement agree within 1%
    assert abs(b.coarse_value - b.value) / b.value <= 0.01


def test_min_bound_constant_phase_invariance(rng):
    dm = imaging.d_matrices(imaging.n_matrices())
    P = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    P /= np.linalg.norm(P)
    a = imaging.min_bound_constant(P, dm).value
    b = imaging.min_bound_constant(np.exp(1.234j) * P, dm).value
    assert abs(a - b) < 1e-6


def test_min_bound_constant_requires_unit():
    with pytest.raises(ValueError):
        imaging.min_bound_constant(np.array([0, 0, 2.0]), imaging.d_matrices(imaging.n_matrices()))


def test_expansion_n2_matches_transfer_rows(rule16):
    z1 = np.array([0.3, -0.4, 0.5])
    R = 7.0
    T = imaging.compute_T_tilde(z1, rule16).T
    for m in range(-2, 3):
        np.testing.assert_allclose(
            imaging.expansion_coeff_T(2, m, z1, R, rule16), -T[m + 2] / (9 * R**4), atol=1e-10 / R**4
        )


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_radial_expansion_corrected(n, data):
    sc, rule, meas, pd = data
    got = imaging.radial_coefficients(meas, n)
    want = np.array([imaging.predicted_radial_coefficient(n, m, Z1, pd.P, sc.R0, rule) for m in range(-n, n + 1)])
    assert np.linalg.norm(got - want) / np.linalg.norm(want) <= 1e-6


def test_radial_expansion_literal_holds_for_n1_only(data):
    sc, rule, meas, pd = data
    for n in (1, 2, 3):
        got = imaging.radial_coefficients(meas, n)
        lit = np.array([-6 * sc.R0**3 * imaging.expansion_coeff_T(n, m, Z1, sc.R0, rule) @ pd.P
                        for m in range(-n, n + 1)])
        np.testing.assert_allclose(got, (n + 1) ** 2 / 4 * lit, rtol=1e-6, atol=1e-6 * np.abs(got).max())


def test_expansion_decay_in_n(rule16):
    z1 = np.array([0.75, 0.0, 0.0])
    R = 7.0
    norms = [max(np.linalg.norm(imaging.expansion_coeff_T(n, m, z1, R, rule16)) for m in range(-n, n + 1))
             for n in (2, 3, 4, 5)]
    for n, (a, b) in zip((2, 3, 4), zip(norms, norms[1:])):
        # the |z1|^{n-1} / R^{n+2} factor predicts b / a = |z1| / R
        assert abs((b / a) / (np.linalg.norm(z1) / R) - 1) <= 0.2


def test_expansion_errors(rule16):
    with pytest.raises(IndexDomainError):
        imaging.expansion_coeff_T(2, 3, Z1, 7.0, rule16)
    with pytest.raises(ValueError):
        imaging.expansion_coeff_T(2, 0, np.array([8.0, 0, 0]), 7.0, rule16)


def test_series_z_zero():
    x = np.array([2.0, -1.0, 3.0])
    got = imaging.gradient_gamma0_series(x, np.zeros(3), 0)
    np.testing.assert_allclose(got, x / (4 * np.pi * np.linalg.norm(x) ** 3), rtol=1e-14)


def test_series_closed_form():
    x, z = np.array([7.0, 0, 0]), np.array([0.75, 0, 0])
    r = x - z
    got = imaging.gradient_gamma0_series(x, z, 12)
    assert np.linalg.norm(got - r / (4 * np.pi * np.linalg.norm(r) ** 3)) <= 1e-10 * np.linalg.norm(got)


def test_series_geometric_convergence():
    x, z = np.array([3.0, 1.0, -2.0]), np.array([0.4, 0.5, 0.3])
    exact = (x - z) / (4 * np.pi * np.linalg.norm(x - z) ** 3)
    errs = [np.linalg.norm(imaging.gradient_gamma0_series(x, z, N) - exact) for N in range(2, 12)]
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    q = np.linalg.norm(z) / np.linalg.norm(x)
    assert np.all(ratios < 1)
    assert abs(np.exp(np.mean(np.log(ratios))) / q - 1) < 0.25


def test_series_divergence_domain():
    with pytest.raises(DivergenceDomainError):
        imaging.gradient_gamma0_series(np.array([0.5, 0, 0]), np.array([0.6, 0, 0]), 3)
