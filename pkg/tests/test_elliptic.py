import math

import numpy as np
import pytest

from blowup.elliptic import (
    BallLargeSolution,
    RadialProblem,
    ball_grid,
    ball_rescaled_bound,
    exterior_singular,
    export_radial,
    extrapolate_ladder,
    first_integral_center,
    solve_ball_large,
)
from blowup.exceptions import InvalidArgument, LadderNotConverged
from blowup.profile import lambda_nq

# centre value of the 1-D large solution of the unit interval for q = 3
GAMMA_QUARTER_ORACLE = math.gamma(0.25) ** 2 / (4.0 * math.sqrt(math.pi))


@pytest.fixture(scope="module")
def ball_13():
    return solve_ball_large(RadialProblem(1, 3.0))


def test_first_integral_closed_form():
    assert first_integral_center(3.0) == pytest.approx(GAMMA_QUARTER_ORACLE, rel=1e-10)
    assert GAMMA_QUARTER_ORACLE == pytest.approx(1.8540746773, rel=1e-9)


@pytest.mark.parametrize("q, radius, expected", [
    (3.0, 1.0, 1.8540746773),
    (2.0, 1.0, 8.847515954),
    (3.0, 2.0, 0.92703734),
])
def test_first_integral_frozen(q, radius, expected):
    assert first_integral_center(q, radius) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("q", [1.5, 2.0, 3.0, 5.0])
def test_first_integral_radius_scaling(q):
    a = 2.0 / (q - 1.0)
    assert first_integral_center(q, 3.0) == pytest.approx(3.0 ** (-a) * first_integral_center(q), rel=1e-10)


def test_ball_centre_matches_first_integral(ball_13):
    assert ball_13.center_value == pytest.approx(GAMMA_QUARTER_ORACLE, rel=1e-4)
    assert ball_13.center_value > lambda_nq(1, 3.0)


def test_ladder_monotone_and_converging(ball_13):
    levels = ball_13.values_per_k
    assert np.all(np.diff(levels, axis=0) >= -1e-12 * np.maximum(1, np.abs(levels[1:])))
    assert ball_13.increments[-1] <= 1e-4
    assert np.all(np.diff(ball_13.limit_values) > 0)


def test_ball_3d_frozen():
    sol = solve_ball_large(RadialProblem(3, 2.0))
    assert sol.center_value == pytest.approx(15.7232, rel=1e-4)
    assert sol.center_value > lambda_nq(3, 2.0)


def test_ladder_not_converged():
    p = RadialProblem(1, 3.0, k_ladder=(1.0, 2.0))
    with pytest.raises(LadderNotConverged):
        solve_ball_large(p, extend=False)


def test_extrapolation_never_below_top():
    levels = np.array([[1.0, 1.0], [1.5, 1.0], [1.75, 1.0]])
    np.testing.assert_allclose(extrapolate_ladder(levels), [2.0, 1.0])


def test_rescaled_bound(ball_13):
    assert ball_rescaled_bound(1, 3.0, 0.5, ball_13) == pytest.approx(2 * ball_13.center_value)
    with pytest.raises(InvalidArgument):
        ball_rescaled_bound(2, 3.0, 0.5, ball_13)


def test_exterior_singular():
    assert exterior_singular(1, 3.0, 0.5) == pytest.approx(2 * math.sqrt(2.0))
    with pytest.raises(InvalidArgument):
        exterior_singular(1, 3.0, 0.0)


@pytest.mark.parametrize("kwargs", [{"N": 0}, {"q": 1.0}, {"radius": -1.0}, {"k_ladder": (10.0, 5.0)}])
def test_problem_validation(kwargs):
    base = {"N": 1, "q": 3.0}
    base.update(kwargs)
    with pytest.raises(InvalidArgument):
        RadialProblem(**base)


def test_ball_grid_resolves_sphere():
    g = ball_grid(2.0, 100)
    assert g.nodes[0] == 0.0 and g.nodes[-1] < 2.0
    assert g.widths[-1] == pytest.approx(2e-8, rel=1e-6)


def test_export_and_estimator(ball_13, tmp_path):
    export_radial(ball_13, tmp_path / "b.csv")
    data = np.loadtxt(tmp_path / "b.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, -1], ball_13.limit_values)
    est = BallLargeSolution(N=1, q=3.0).fit()
    assert est.predict([0.0])[0] == pytest.approx(ball_13.center_value)
    with pytest.raises(InvalidArgument):
        est.predict([1.5])


@pytest.mark.parametrize("x, expected", [(1.0, 2.0), (2.0, 0.5)])
def test_exterior_singular_values(x, expected):
    assert exterior_singular(3, 2.0, x) == pytest.approx(expected, rel=1e-13)


def test_exterior_singular_scaling():
    ell, x = 1.7, 0.3
    assert exterior_singular(2, 3.0, ell * x) == pytest.approx(ell ** -1.0 * exterior_singular(2, 3.0, x))


def test_radius_scaling():
    values = []
    for radius in (0.5, 1.0, 2.0):
        sol = solve_ball_large(RadialProblem(3, 2.0, radius, ball_grid(radius)))
        values.append(sol.center_value * radius**2)
    np.testing.assert_allclose(values, values[1], rtol=1e-2)


def test_rescaled_bound_unit_and_monotone(ball_13):
    assert ball_rescaled_bound(1, 3.0, 1.0, ball_13) == pytest.approx(ball_13.center_value)
    rho = np.array([0.2, 0.5, 1.0, 3.0])
    assert np.all(np.diff(ball_rescaled_bound(1, 3.0, rho, ball_13)) < 0)
