import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from boundary_trace.errors import DomainFileError, EmptyConstraintError, InconsistentBoundaryDataError, InfeasibleError
from boundary_trace.selection import (
    AffineConstraint,
    PairGraph,
    Subset,
    build_pair_graph,
    finiteness_subsets,
    graph_from_dict,
    hyperplanes_from_data,
    lipschitz_selection,
    path_metric,
    project_to_affine,
    selection_seminorm,
    subset_lambda,
)
from boundary_trace.whitney import intersecting_pairs


def _horizontal(*offsets):
    return [AffineConstraint.hyperplane((0.0, 1.0), b) for b in offsets]


@pytest.fixture(scope="module")
def star():
    return PairGraph(2, ((0, 1, 2.0),)), _horizontal(0.0, 1.0)


@pytest.fixture(scope="module")
def chain():
    return PairGraph(3, ((0, 1, 1.0), (1, 2, 1.0))), _horizontal(0.0, 1.0, 3.0)


@pytest.fixture(scope="module")
def unit_graph(unit_dec):
    return build_pair_graph(unit_dec)


def test_two_parallel_hyperplanes(star):
    graph, constraints = star
    sel = lipschitz_selection(graph, constraints)
    assert sel.lam == pytest.approx(0.5, abs=1e-9)
    assert sel.seminorm == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(sel.values, [[0.0, 0.0], [0.0, 1.0]], atol=1e-9)
    assert sel.components == 1


def test_tilted_hyperplanes():
    graph = PairGraph(2, ((0, 1, 1.0),))
    constraints = [AffineConstraint.hyperplane((1.0, 1.0), 0.0), AffineConstraint.hyperplane((1.0, 1.0), 2.0)]
    assert lipschitz_selection(graph, constraints).lam == pytest.approx(1.0, abs=1e-9)


def test_fixed_lambda(star):
    graph, constraints = star
    with pytest.raises(InfeasibleError):
        lipschitz_selection(graph, constraints, mode="feas", lam=0.4)
    sel = lipschitz_selection(graph, constraints, mode="feas", lam=0.6)
    assert sel.lam == 0.6
    assert sel.seminorm <= 0.6 + 1e-9
    assert max(c.residual(v) for c, v in zip(constraints, sel.values)) < 1e-9


def test_selection_arguments(star):
    graph, constraints = star
    with pytest.raises(ValueError):
        lipschitz_selection(graph, constraints, mode="max")
    with pytest.raises(ValueError):
        lipschitz_selection(graph, constraints, mode="feas")
    with pytest.raises(ValueError):
        lipschitz_selection(graph, constraints[:1])


def test_empty_constraint_is_infeasible(star):
    graph, _ = star
    with pytest.raises(InfeasibleError, match="empty constraints at nodes \\[1\\]"):
        lipschitz_selection(graph, [AffineConstraint("full"), AffineConstraint("empty")])


def test_unconstrained_components_are_pinned():
    graph = PairGraph(3, ((0, 1, 1.0),))
    constraints = [AffineConstraint("full"), AffineConstraint("full"), AffineConstraint.hyperplane((2.0, 0.0), 1.0)]
    sel = lipschitz_selection(graph, constraints)
    assert sel.pinned == (0, 1)
    assert sel.components == 2
    assert sel.lam == 0.0
    assert np.allclose(sel.values[2], [0.5, 0.0])
    assert not sel.values[:2].any()


def test_constraint_kinds():
    with pytest.raises(ValueError):
        AffineConstraint("circle")
    with pytest.raises(ValueError):
        AffineConstraint.hyperplane((0.0, 0.0), 1.0)
    assert AffineConstraint("full").residual((5.0, 5.0)) == 0.0
    assert AffineConstraint("empty").residual((0.0, 0.0)) == float("inf")
    with pytest.raises(EmptyConstraintError):
        project_to_affine((0.0, 0.0), AffineConstraint("empty"))


def test_projection_keeps_points_on_the_hyperplane():
    c = AffineConstraint.hyperplane((1.0, 1.0), 3.0)
    z = np.array([1.0, 2.0])
    assert np.array_equal(project_to_affine(z, c), z)


coordinates = st.floats(-100, 100, allow_nan=False)


@given(st.floats(0.5, 10), st.floats(-10, 10), st.floats(-50, 50), coordinates, coordinates)
def test_projection_lands_on_the_hyperplane(h0, h1, b, z0, z1):
    c = AffineConstraint.hyperplane((h0, h1), b)
    p = project_to_affine((z0, z1), c)
    assert c.residual(p) <= 1e-9 * (1.0 + abs(b) + abs(h0 * z0) + abs(h1 * z1))
    assert np.allclose(project_to_affine(p, c), p, atol=1e-9)


def test_pair_graph_of_unit_square(unit_dec, unit_graph):
    assert unit_graph.size == len(intersecting_pairs(unit_dec))
    assert unit_graph.node_index()[unit_graph.pairs[0].cubes] == 0
    for a, b, w in unit_graph.edges:
        pa, pb = unit_graph.pairs[a], unit_graph.pairs[b]
        assert set(pa.cubes) & set(pb.cubes)
        assert w == pa.length + pb.length


def test_path_metric(chain):
    graph, _ = chain
    assert path_metric(graph, 0, 0) == 0.0
    assert path_metric(graph, 0, 2) == 2.0
    assert path_metric(PairGraph(2, ()), 0, 1) == float("inf")


def test_subset_lambda_is_below_the_full_lambda(chain):
    graph, constraints = chain
    full = lipschitz_selection(graph, constraints).lam
    assert full == pytest.approx(2.0, abs=1e-9)
    assert subset_lambda(graph, constraints, Subset((0, 1))) == pytest.approx(1.0, abs=1e-9)
    assert subset_lambda(graph, constraints, Subset((0, 2))) == pytest.approx(1.5, abs=1e-9)


def test_exhaustive_subsets_of_a_triangle():
    graph = PairGraph(3, ((0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)))
    subsets = list(finiteness_subsets(graph, 2, budget=100))
    assert [s.nodes for s in subsets] == [(0, 1), (0, 2), (1, 2), (0, 1, 2)]
    with pytest.raises(ValueError):
        list(finiteness_subsets(graph, 0, budget=100))


def test_sampled_subsets_are_seeded(unit_graph):
    first = list(finiteness_subsets(unit_graph, 2, budget=10, seed=7))
    again = list(finiteness_subsets(unit_graph, 2, budget=10, seed=7))
    assert len(first) == 10
    assert first == again
    assert all(2 <= len(s.nodes) <= 4 for s in first)


def test_affine_data_gives_a_flat_selection(unit_graph, unit_anchors):
    f = {k: 1.0 + 2.0 * a.a_q.point.as_float()[0] - 3.0 * a.a_q.point.as_float()[1] for k, a in unit_anchors.items()}
    constraints = hyperplanes_from_data(unit_graph, unit_anchors, f)
    sel = lipschitz_selection(unit_graph, constraints)
    assert sel.lam == pytest.approx(0.0, abs=1e-7)
    assert selection_seminorm(unit_graph, sel) < 1e-6
    hyperplane_nodes = [n for n, c in enumerate(constraints) if c.kind == "hyperplane"]
    assert np.allclose(sel.values[hyperplane_nodes], [2.0, -3.0], atol=1e-6)


def test_inconsistent_values_at_a_shared_anchor(unit_graph, unit_anchors):
    shared = next(
        n for n, p in enumerate(unit_graph.pairs) if unit_anchors[p.q].a_q.point == unit_anchors[p.k].a_q.point
    )
    f = {k: 0.0 for k in unit_anchors}
    f[unit_graph.pairs[shared].q] = 1.0
    with pytest.raises(InconsistentBoundaryDataError) as info:
        hyperplanes_from_data(unit_graph, unit_anchors, f)
    assert shared in info.value.nodes
    loose = hyperplanes_from_data(unit_graph, unit_anchors, f, strict=False)
    assert loose[shared].kind == "empty"


def test_graph_document():
    graph, constraints, n = graph_from_dict(
        {
            "n": 2,
            "nodes": [
                {"id": 1, "constraint": {"kind": "hyperplane", "h": [0, 1], "b": 1}},
                {"id": 0, "constraint": {"kind": "hyperplane", "h": [0, 1], "b": 0}},
            ],
            "edges": [{"a": 1, "b": 0, "w": 2}],
        }
    )
    assert n == 2
    assert graph.edges == ((0, 1, 2.0),)
    assert [c.offset for c in constraints] == [0.0, 1.0]


@pytest.mark.parametrize(
    "document",
    [
        {"nodes": [{"id": 1}]},
        {"nodes": [{"id": 0, "constraint": {"kind": "hyperplane", "h": [1], "b": 0}}]},
        {"nodes": [{"id": 0}], "edges": [{"a": 0, "b": 0, "w": 1}]},
        {"nodes": [{"id": 0}, {"id": 1}], "edges": [{"a": 0, "b": 1, "w": 0}]},
        {"nodes": [{"id": 0}, {"id": 1}], "edges": [{"a": 0, "b": 2, "w": 1}]},
        {"edges": []},
    ],
)
def test_malformed_graph_documents(document):
    with pytest.raises(DomainFileError):
        graph_from_dict(document)


def test_repeated_edges_are_rejected():
    document = {
        "nodes": [{"id": 0}, {"id": 1}],
        "edges": [{"a": 0, "b": 1, "w": 1}, {"a": 1, "b": 0, "w": 3}],
    }
    with pytest.raises(DomainFileError, match="duplicate edge 0-1"):
        graph_from_dict(document)
