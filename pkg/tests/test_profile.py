import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup.exceptions import InsufficientNodes, InvalidArgument, OutOfRange
from blowup.profile import (
    ProfileParams,
    SelfSimilarProfile,
    evaluate_V,
    export_profile,
    fit_inner_constant,
    fit_outer_constant,
    lambda_nq,
    load_profile,
    log_grid,
    profile_value,
    solve_profile,
    subcritical,
)


@pytest.fixture(scope="module")
def profile_13():
    return solve_profile(ProfileParams(1, 3.0))


@pytest.mark.parametrize("N, q, expected", [
    (1, 3.0, math.sqrt(2.0)),
    (2, 3.0, 1.0),
    (3, 2.5, 0.5823869764908661),
    (1, 2.0, 6.0),
])
def test_lambda_closed_form(N, q, expected):
    assert lambda_nq(N, q) == pytest.approx(expected, rel=1e-13)


@pytest.mark.parametrize("N, q", [(3, 3.0), (3, 4.0), (4, 2.0)])
def test_supercritical_rejected(N, q):
    assert not subcritical(N, q)
    with pytest.raises(InvalidArgument, match="supercritical"):
        lambda_nq(N, q)
    with pytest.raises(InvalidArgument):
        ProfileParams(N, q)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 5), s=st.floats(0.1, 0.99))
def test_lambda_solves_stationary_equation(N, s):
    # lambda r^-a solves the radial equation v'' + (N-1)/r v' = v^q
    q = 1.0 + s * (2.0 / (N - 2) if N > 2 else 4.0)
    lam = lambda_nq(N, q)
    a = 2.0 / (q - 1.0)
    lhs = a * (a + 1) - (N - 1) * a
    assert lhs == pytest.approx(lam ** (q - 1), rel=1e-10)


def test_frozen_values(profile_13):
    np.testing.assert_allclose(profile_value(profile_13, [0.5, 1.0, 2.0]),
                               [2.82270108, 1.37313793, 0.50003893], rtol=1e-7)
    assert profile_13.c_fit == pytest.approx(1.32427, rel=1e-5)


def test_refinement_consistency(profile_13):
    fine = solve_profile(ProfileParams(1, 3.0, grid=log_grid(1e-3, 12.0, 800)))
    r = np.array([0.1, 0.5, 1.0, 2.0, 4.0])
    np.testing.assert_allclose(profile_value(fine, r), profile_value(profile_13, r), rtol=1e-4)


def _ode_defect(p, lo=0.1, hi=6.0):
    r, H = p.r, p.values
    # central differences in log r, where the grid is uniform
    ds = np.log(r[1] / r[0])
    hs = np.gradient(H, ds, edge_order=2)
    hss = np.gradient(hs, ds, edge_order=2)
    d1, d2 = hs / r, (hss - hs) / r**2
    res = d2 + (p.N - 1) / r * d1 + r / 2 * d1 + H / (p.q - 1) - H ** p.q
    scale = np.abs(d2) + H ** p.q + H
    inner = (r > lo) & (r < hi)
    return np.max(np.abs(res[inner]) / scale[inner])


def test_profile_solves_ode_second_order(profile_13):
    fine = solve_profile(ProfileParams(1, 3.0, grid=log_grid(1e-3, 12.0, 800)))
    coarse_defect, fine_defect = _ode_defect(profile_13), _ode_defect(fine)
    assert coarse_defect < 1e-2
    assert fine_defect < 0.35 * coarse_defect


def test_asymptotic_constants(profile_13):
    assert fit_inner_constant(profile_13) == pytest.approx(math.sqrt(2.0), rel=1e-6)
    assert fit_outer_constant(profile_13) == pytest.approx(profile_13.c_fit, rel=1e-2)
    assert np.all(profile_13.values > 0)


def test_inner_fit_needs_nodes():
    with pytest.raises(InsufficientNodes):
        solve_profile(ProfileParams(1, 3.0, grid=log_grid(1e-3, 12.0, 10)))


def test_out_of_range_and_extension(profile_13):
    with pytest.raises(OutOfRange):
        profile_value(profile_13, 20.0)
    inner = profile_value(profile_13, 1e-5, extend=True)
    assert inner == pytest.approx(profile_13.lambda_fit * 1e5, rel=1e-12)
    assert 0 < profile_value(profile_13, 20.0, extend=True) < profile_13.values[-1]


def test_evaluate_V_scaling(profile_13):
    # V(x, t) = l^a V(l x, l^2 t) with a = 2/(q-1)
    x, t, ell = np.array([0.2, 0.5]), 0.3, 1.7
    a = 2.0 / (profile_13.q - 1)
    np.testing.assert_allclose(evaluate_V(profile_13, x, t),
                               ell**a * evaluate_V(profile_13, ell * x, ell**2 * t), rtol=1e-12)
    with pytest.raises(InvalidArgument):
        evaluate_V(profile_13, x, 0.0)


def test_export_round_trip(profile_13, tmp_path):
    export_profile(profile_13, tmp_path / "h.csv")
    back = load_profile(tmp_path / "h.csv")
    np.testing.assert_array_equal(back.values, profile_13.values)
    np.testing.assert_array_equal(back.r, profile_13.r)
    assert back.lambda_fit == profile_13.lambda_fit


def test_estimator_api():
    est = SelfSimilarProfile(N=1, q=3.0).fit()
    X = np.array([[0.5, 1.0], [1.0, 1.0]])
    np.testing.assert_allclose(est.predict(X), [2.82270108, 1.37313793], rtol=1e-7)
    assert est.get_params()["q"] == 3.0
    with pytest.raises(InvalidArgument):
        est.predict(np.ones((2, 3)))


@pytest.mark.parametrize("N, q", [(2, 1.5), (3, 2.0), (2, 1.2), (1, 5.0)])
def test_higher_dimensions_positive(N, q):
    p = solve_profile(ProfileParams(N, q))
    assert np.all(p.values > 0)
    assert fit_inner_constant(p) == pytest.approx(lambda_nq(N, q), rel=1e-6)
    assert p.values[0] == pytest.approx(lambda_nq(N, q) * p.r[0] ** (-2 / (q - 1)), rel=1e-12)


@pytest.mark.parametrize("N, q, expected", [(3, 2.0, True), (3, 4.0, False), (2, 10.0, True)])
def test_subcritical_examples(N, q, expected):
    assert subcritical(N, q) is expected


def test_lambda_vanishes_at_critical_exponent():
    values = [lambda_nq(3, 3.0 - eps) for eps in (1e-3, 1e-6, 1e-9)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 1e-4


@pytest.mark.parametrize("N, q", [(1, 2.0), (2, 2.0), (3, 2.0), (3, 2.5)])
def test_inner_asymptotic_and_decay(N, q):
    p = solve_profile(ProfileParams(N, q))
    assert fit_inner_constant(p) == pytest.approx(lambda_nq(N, q), rel=0.02)
    assert p.r[-1] ** (2 / (q - 1)) * p.values[-1] <= 1e-6
    assert p.c_fit > 0
    assert fit_outer_constant(p, (0.5, 0.8)) == pytest.approx(p.c_fit, rel=0.05)


def test_inner_value_three_dimensions():
    p = solve_profile(ProfileParams(3, 2.0))
    assert p.r[0] ** 2 * p.values[0] == pytest.approx(2.0, rel=0.02)
    assert evaluate_V(p, p.r[0], 1.0) == pytest.approx(2.0 * p.r[0] ** -2, rel=0.02)


@pytest.mark.parametrize("N, q", [(1, 3.0), (3, 2.0), (3, 2.5)])
def test_refinement_order(N, q):
    ps = [solve_profile(ProfileParams(N, q, grid=log_grid(1e-3, 12.0, n))) for n in (201, 401, 801)]
    a, b, c = ps[0].values, ps[1].values[::2], ps[2].values[::4]
    r = ps[0].r
    m = (r > 0.01) & (r < 8.0)
    e1 = np.max(np.abs(a - b)[m] / b[m])
    e2 = np.max(np.abs(b - c)[m] / c[m])
    assert np.log2(e1 / e2) >= 1.9


def test_fits_of_exact_models():
    q, N = 3.0, 1
    grid = log_grid(1e-3, 12.0, 400)
    r = grid.nodes
    params = ProfileParams(N, q, grid=grid)
    from blowup.profile import Profile

    inner = Profile(params, 1.7 * r ** (-1.0))
    assert fit_inner_constant(inner) == pytest.approx(1.7, rel=1e-13)
    outer = Profile(params, 0.8 * r ** (1.0 - N) * np.exp(-r * r / 4))
    assert fit_outer_constant(outer) == pytest.approx(0.8, rel=1e-12)


def test_V_at_unit_time_hits_nodes(profile_13):
    np.testing.assert_array_equal(evaluate_V(profile_13, profile_13.r[5:50], 1.0),
                                  profile_13.values[5:50])
