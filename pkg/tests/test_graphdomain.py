import numpy as np
import pytest

from blowup.exceptions import BandViolation, GridMisalignment, InvalidArgument, SnapshotMismatch
from blowup.graphdomain import (
    GraphDomain,
    check_translation_bounds,
    export_mask,
    find_delta_eps,
    graph_time_grid,
    nesting_report,
    read_mask,
    resolved_ladder,
    sandwich_violation,
    shifted_family,
    sigma_monotonicity,
    smooth_phi,
    solve_large,
    solve_v_sigma,
    solve_w_sigma,
    superposition_supersolution,
    time_monotonicity,
    w6_violation,
)
from blowup.parabolic import unit_ball_evolution
from blowup.profile import ProfileParams, evaluate_V, lambda_nq, solve_profile

Q = 3.0
TAU = 0.01


def wavy(x):
    return 1.0 + 0.2 * np.sin(3.0 * x)


@pytest.fixture(scope="module")
def profile_1d():
    return solve_profile(ProfileParams(1, Q))


@pytest.fixture(scope="module")
def coarse_run():
    # h = 0.05 keeps the module fast; the reference run lives in the verify suite
    d = GraphDomain(1.0, wavy, h=0.05)
    family = shifted_family(d, (2, 1))
    grid = graph_time_grid(0.05, TAU)
    u = solve_large(d, Q, grid)
    vs = [solve_v_sigma(d, s, Q, grid) for s in family]
    ws = [solve_w_sigma(d, s, Q, grid) for s in family]
    return d, family, u, vs, ws


def test_constant_graph_is_unchanged():
    d = GraphDomain(1.0, lambda x: 0.9 + 0 * x, h=0.02)
    np.testing.assert_allclose(smooth_phi(d, 0.1), 0.9, rtol=1e-13)


def test_smoothing_stays_in_band():
    d = GraphDomain(1.0, wavy, h=0.01)
    assert np.max(np.abs(smooth_phi(d, 0.05) - d.phi_values)) <= 0.025


def test_nesting_chain():
    d = GraphDomain(1.0, wavy, h=0.01)
    report = nesting_report(d, shifted_family(d, (10, 5)))
    assert report == {"nested": True, "strict": True}


def test_band_violation():
    d = GraphDomain(1.0, wavy, h=0.01)
    with pytest.raises(BandViolation):
        smooth_phi(d, 0.1, finer=(0.05, d.phi_values + 0.2))


@pytest.mark.parametrize("kwargs, exc", [
    ({"R": 1.0, "h": 0.03}, GridMisalignment),
    ({"R": 1.0, "h": 0.02, "phi": lambda x: -1 + 0 * x}, InvalidArgument),
])
def test_domain_validation(kwargs, exc):
    kwargs.setdefault("phi", wavy)
    with pytest.raises(exc):
        GraphDomain(**kwargs)


def test_family_order_validation():
    d = GraphDomain(1.0, wavy, h=0.05)
    with pytest.raises(InvalidArgument):
        shifted_family(d, (1, 2))


def test_resolved_ladder():
    lad = resolved_ladder(Q, 0.02)
    assert lad[0] == 10.0
    assert lad[-1] == pytest.approx(lambda_nq(1, Q) / 0.02)
    assert lad[-1] == pytest.approx(70.71, abs=0.01)
    assert np.all(np.diff(lad) > 0)
    assert resolved_ladder(Q, 0.5) == (pytest.approx(lambda_nq(1, Q) * 2),)


def test_translation_bounds(coarse_run):
    d, family, u, vs, ws = coarse_run
    for s, v, w in zip(family, vs, ws):
        rep = check_translation_bounds(d, s, Q, u, v, w)
        assert rep.p3_lower <= 1e-8
        assert rep.p3_upper <= 1e-8
    assert sandwich_violation(d, u, vs[-1], ws[-1], family[-1]) <= 1e-8


def test_sigma_and_time_monotone(coarse_run):
    _, _, u, vs, ws = coarse_run
    assert sigma_monotonicity(vs, outer=False) <= 1e-12
    assert sigma_monotonicity(ws, outer=True) <= 1e-12
    for fld in [u] + vs + ws:
        assert time_monotonicity(fld) <= 1e-12


def test_delta_monotone_in_eps(coarse_run):
    d, _, u, vs, ws = coarse_run
    small = find_delta_eps(d, Q, 0.5, TAU, vs[-1], ws[-1], 0.5)
    large = find_delta_eps(d, Q, 1.0, TAU, vs[-1], ws[-1], 0.5)
    assert small.found and large.found
    assert large.delta >= small.delta
    assert small.delta < small.first_failure_depth
    assert w6_violation(d, 0.5, TAU, small.delta, u, u, 0.5) <= 1e-12


def test_delta_needs_aligned_times(coarse_run):
    d, _, _, vs, ws = coarse_run
    with pytest.raises(SnapshotMismatch):
        find_delta_eps(d, Q, 0.5, 0.013, vs[-1], ws[-1], 0.5)
    with pytest.raises(InvalidArgument):
        find_delta_eps(d, Q, 0.5, TAU, vs[-1], ws[-1], 1.5)


def test_superposition_vanishes_at_early_times(profile_1d):
    d = GraphDomain(1.0, wavy, h=0.05)
    vals = superposition_supersolution(d, Q, profile_1d, 0.0, 0.5, np.array([1e-3, 1e-2, 0.1]))
    assert vals[0] < 1e-20
    assert np.all(np.diff(vals) > 0)
    assert np.isinf(superposition_supersolution(d, Q, profile_1d, 0.0, 0.0, 0.1))
    with pytest.raises(InvalidArgument):
        superposition_supersolution(d, Q, solve_profile(ProfileParams(2, Q)), 0.0, 0.5, 0.1)


def test_polyhedral_bound_in_disc(profile_1d):
    s = np.array([0.02, 0.05, 0.1, 0.2, 0.4])
    centre = unit_ball_evolution(2, Q, s, n=81, dt_max=0.005)
    assert np.all(centre <= 4.0 * evaluate_V(profile_1d, 1.0 / np.sqrt(2.0), s))


def test_mask_round_trip(tmp_path, coarse_run):
    d, family, _, _, _ = coarse_run
    nodes = family[0].outer
    export_mask(nodes, tmp_path / "outer.txt")
    back = read_mask(tmp_path / "outer.txt")
    assert back.shape == nodes.shape
    np.testing.assert_array_equal(back == 0, nodes.labels == 0)
    np.testing.assert_array_equal(back == 1, nodes.labels == 1)
    np.testing.assert_array_equal(back == 2, nodes.piece_mask("top"))
    glyphs = set((tmp_path / "outer.txt").read_text().split())
    assert glyphs <= {".", "#", "B1", "B2"}
