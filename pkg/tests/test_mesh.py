import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup.exceptions import ExhaustionNotNested, InvalidArgument
from blowup.mesh import NodeSet, interval_nodes, radial_nodes, rectangle_nodes
from blowup.numcore import make_graded_grid


def _full_operator(ns):
    A, B = ns.operator
    return A.toarray(), B.toarray()


@pytest.mark.parametrize("ratio", [1.0, 0.8, 1.3])
def test_interval_operator_is_m_matrix(ratio):
    ns = interval_nodes(make_graded_grid(0.0, 1.0, 12, ratio))
    A, B = _full_operator(ns)
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0) and np.all(B <= 0)
    np.testing.assert_allclose(A.sum(axis=1) + B.sum(axis=1), 0.0, atol=1e-9)


def test_interval_laplacian_exact_on_quadratics():
    ns = interval_nodes(make_graded_grid(0.0, 1.0, 9, 1.2))
    x = ns.axes[0]
    u = x**2
    A, B = ns.operator
    lap = -(A @ u[ns.unknown_index] + B @ u[ns.dirichlet_index])
    # nonuniform three-point formula is exact for quadratics
    np.testing.assert_allclose(lap, 2.0, rtol=1e-10)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_radial_operator_on_r_squared(dim):
    ns = radial_nodes(make_graded_grid(0.0, 1.0, 200), dim)
    r = ns.axes[0]
    A, B = ns.operator
    lap = -(A @ (r**2)[ns.unknown_index] + B @ (r**2)[ns.dirichlet_index])
    np.testing.assert_allclose(lap, 2.0 * dim, rtol=2e-2)
    np.testing.assert_allclose(lap[1:-1], 2.0 * dim, rtol=1e-6)


def test_rectangle_five_point():
    g = make_graded_grid(0.0, 1.0, 6)
    ns = rectangle_nodes(g, g)
    X, Y = ns.coordinates()
    u = (X**2 + Y**2).ravel()
    A, B = ns.operator
    lap = -(A @ u[ns.unknown_index] + B @ u[ns.dirichlet_index])
    np.testing.assert_allclose(lap, 4.0, rtol=1e-10)
    assert sorted(ns.pieces.values()) == ["bottom", "left", "right", "top"]


def test_distances():
    g = make_graded_grid(0.0, 1.0, 11)
    ns = rectangle_nodes(g, g)
    d = ns.distance_in_cells(["left"])
    assert d[3, 7] == 3
    np.testing.assert_allclose(ns.distance_to(["left"])[:, 4], g.nodes, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(m=st.integers(0, 3))
def test_erosion_nested(m):
    g = make_graded_grid(0.0, 1.0, 15)
    ns = rectangle_nodes(g, g)
    inner = ns.eroded(m)
    deeper = ns.eroded(m + 1)
    assert np.all(deeper.inside <= inner.inside)
    assert np.all(inner.inside <= ns.inside)


def test_erosion_empties():
    ns = interval_nodes(make_graded_grid(0.0, 1.0, 5))
    with pytest.raises(ExhaustionNotNested):
        ns.eroded(3)


def test_radial_erosion_keeps_centre():
    ns = radial_nodes(make_graded_grid(0.0, 1.0, 10), 3).eroded(4)
    assert ns.labels[0] == 1
    assert ns.labels[5] == 2 and ns.labels[6] == 0


@pytest.mark.parametrize("labels, pieces, kw", [
    (np.array([2, 1, 9]), {2: "a"}, {}),
    (np.array([2, 2, 2]), {2: "a"}, {}),
    (np.array([2, 1, 2]), {2: "a"}, {"insulated": frozenset({"b"})}),
])
def test_nodeset_validation(labels, pieces, kw):
    with pytest.raises(InvalidArgument):
        NodeSet((np.array([0.0, 0.5, 1.0]),), labels, pieces, **kw)


def test_insulated_piece_becomes_unknown():
    g = make_graded_grid(0.0, 1.0, 6)
    base = interval_nodes(g)
    ns = NodeSet(base.axes, base.labels, base.pieces, insulated=frozenset({"right"}))
    assert ns.unknown_mask[-1] and not ns.unknown_mask[0]
    A, B = ns.operator
    # zero-flux row: constant is in the kernel together with B
    np.testing.assert_allclose(A.toarray().sum(axis=1) + B.toarray().sum(axis=1), 0.0, atol=1e-9)
