import dataclasses
import math

import numpy as np
import pytest
from pydantic import ValidationError

from boundary_trace.errors import DomainFileError, MissingCubeDataError
from boundary_trace.extension import seminorm_estimate, whitney_extend
from boundary_trace.fields import synthesize_test_field
from boundary_trace.geometry import Cube, Point
from boundary_trace.intrinsic_metric import element_for_direction
from boundary_trace.pipeline import (
    BoundaryData,
    PipelineReport,
    check_finiteness,
    count_elements,
    cube_values,
    extend_from_boundary,
    field_jet_constants,
    g_from_selection,
    hull_clear,
    is_visible_triple,
    jet_from_field,
    metric_equivalence_ratio,
    prepare,
    required_alpha,
    trace_continuity,
    visible_subset_check,
)
from boundary_trace.selection import PairGraph, build_pair_graph, hyperplanes_from_data, lipschitz_selection
from boundary_trace.whitney import anchors, intersecting_pairs, whitney_decompose

QUADRATIC = [[1.0, 0.5], [0.0, -0.5]]


@pytest.fixture(scope="module")
def quadratic(unit_square):
    return synthesize_test_field(unit_square, "quadratic", A=QUADRATIC, a=(1.0, -1.0), b=2.0)


@pytest.fixture(scope="module")
def coarse(unit_square):
    dec = whitney_decompose(unit_square, 3)
    return dec, anchors(dec, unit_square)


def test_extension_reproduces_affine_data(unit_square, unit_dec):
    data = BoundaryData.trace_of(synthesize_test_field(unit_square, "affine", a=(2.0, -3.0), b=1.0))
    F, report = extend_from_boundary(unit_square, data, depth=4, probes=10)
    assert report.command == "extend"
    assert report.cubes == len(unit_dec.cubes)
    assert report.lambda_full == pytest.approx(0.0, abs=1e-7)
    assert report.seminorm_out < 1e-3
    assert len(report.trace_residuals) == 10
    assert max(report.trace_residuals) < 1e-6
    assert F.evaluate((0.5, 0.5)).value == pytest.approx(1.0 + 1.0 - 1.5, abs=1e-6)
    assert report.timings == {}


def test_finiteness_on_quadratic_data(unit_square, quadratic):
    report = check_finiteness(unit_square, BoundaryData.trace_of(quadratic), depth=3, budget=20, record_timings=True)
    assert report.status == "ok"
    assert report.lambda_full > 0
    assert report.monotone
    assert report.gamma_hat >= 1.0 - 1e-6
    assert report.subsets == len(report.subset_lambdas) <= 20
    assert sum(report.subset_histogram.values()) == report.subsets
    assert report.max_elements <= 6
    assert not report.infeasible_subsets
    assert "full-lp" in report.timings


def test_finiteness_flags_inconsistent_values(unit_square, coarse):
    dec, table = coarse
    values = {k: 0.0 for k in range(len(dec.cubes))}
    q, _ = next((i, j) for i, j in intersecting_pairs(dec) if table[i].a_q.point == table[j].a_q.point)
    values[q] = 1.0
    report = check_finiteness(unit_square, None, depth=3, budget=20, values=values)
    assert report.status == "infeasible"
    assert report.lambda_full is None
    assert report.infeasible_subsets
    assert report.monotone is None


def test_visible_subsets_on_refined_cubes(unit_square, quadratic):
    report = visible_subset_check(unit_square, BoundaryData.trace_of(quadratic), depth=3, budget=20)
    assert report.flavor == "refined"
    assert list(report.alpha_sweep) == ["1", "2", "4", "8"]
    counts = list(report.alpha_sweep.values())
    assert counts == sorted(counts)
    assert report.visible_subsets == report.alpha_sweep["8"]
    assert report.gamma_hat >= report.gamma_hat_all - 1e-9
    assert report.degenerate_triples >= 0
    assert report.alpha_hat is None or report.alpha_hat >= 1.0
    assert report.gamma_hat_all is not None


def test_visibility_of_a_wall_triple(unit_square):
    triple = [element_for_direction(unit_square, (0, y), Point.of(1, 0)) for y in ("0.25", "0.5", "0.75")]
    cube = Cube.of(("0.5", "0.5"), "0.25")
    assert all(hull_clear(unit_square, e.anchor.point, cube) for e in triple)
    assert required_alpha(triple, cube) == 2.0
    check = is_visible_triple(unit_square, triple, 2.0, cube)
    assert check.visible
    assert check.triple.alpha == 2.0
    assert is_visible_triple(unit_square, triple, 1.5, cube).failed == "scale"
    assert is_visible_triple(unit_square, triple, 4.0, Cube.of((2, 2), "0.25")).failed == "hull"
    with pytest.raises(ValueError):
        is_visible_triple(unit_square, triple, 0.5, cube)
    assert required_alpha([triple[0]] * 3, cube) == math.inf


def test_jet_from_a_quadratic_field(coarse, quadratic):
    dec, table = coarse
    field_jet = jet_from_field(quadratic, dec, table)
    assert sorted(field_jet.jet.f_values) == list(range(len(dec.cubes)))
    assert field_jet.jet.eta >= 0.0
    assert field_jet.node_values.shape == (field_jet.graph.size, 2)
    residual = max(c.residual(v) for c, v in zip(field_jet.constraints, field_jet.node_values))
    assert residual < 1e-6
    fg, g = field_jet_constants(quadratic, dec, table, field_jet.jet)
    assert 0.0 <= fg <= 40.0
    assert 0.0 < g <= 10.0
    F = whitney_extend(dec, table, field_jet.jet)
    assert seminorm_estimate(F, per_side=3).value <= seminorm_estimate(F, per_side=5).value + 1e-12


@pytest.mark.parametrize("A", [QUADRATIC, [[1.0, 0.0], [0.0, 0.0]]])
def test_selected_gradients_meet_the_jet_bounds(unit_square, A):
    data = BoundaryData.trace_of(synthesize_test_field(unit_square, "quadratic", A=A, a=(0.0, 0.0), b=0.0))
    _, report = extend_from_boundary(unit_square, data, depth=3, probes=5)
    assert report.lambda_full > 0
    assert report.eta_over_lambda <= 60.0 + 1e-6
    assert report.g_over_lambda <= 7.0 + 1e-6


def test_gradients_come_from_the_lowest_neighbor_pair(coarse, quadratic):
    dec, table = coarse
    graph = build_pair_graph(dec)
    f = cube_values(BoundaryData.trace_of(quadratic), table)
    sel = lipschitz_selection(graph, hyperplanes_from_data(graph, table, f))
    g = g_from_selection(graph, sel, dec)
    assert sorted(g) == list(range(len(dec.cubes)))
    index = graph.node_index()
    for q, near in enumerate(dec.adjacency):
        t = min(int(k) for k in near if k != q)
        node = index[(min(q, t), max(q, t))]
        assert g[q] == (float(sel.values[node][0]), float(sel.values[node][1]))


def test_jet_constants_of_a_parabola(unit_square, coarse):
    dec, table = coarse
    field = synthesize_test_field(unit_square, "quadratic", A=[[1.0, 0.0], [0.0, 0.0]], a=(0.0, 0.0), b=0.0)
    fg, g = field_jet_constants(field, dec, table, jet_from_field(field, dec, table).jet)
    assert 0.0 < fg <= 40.0
    assert 0.0 < g <= 10.0


@pytest.mark.parametrize("depth", [4, 5])
def test_finiteness_on_slit_witness_data(slit_square, depth):
    data = BoundaryData.trace_of(synthesize_test_field(slit_square, "slit-witness"))
    report = check_finiteness(slit_square, data, depth=depth, budget=50)
    assert report.status == "ok"
    assert report.monotone
    assert not report.infeasible_subsets
    assert 1.0 - 1e-6 <= report.gamma_hat < math.inf
    assert report.max_elements <= 6


def test_elements_are_counted_up_to_equivalence(slit_square):
    data = BoundaryData.trace_of(synthesize_test_field(slit_square, "slit-witness"))
    prep = prepare(slit_square, data, 4, strict=False)
    omegas = [prep.table[k].omega_q for k in range(len(prep.dec.cubes))]
    i, j = next(
        (i, j)
        for i, a in enumerate(omegas)
        for j, b in enumerate(omegas)
        if i < j and a.anchor.point == b.anchor.point and a.sector_id != b.sector_id
    )
    assert count_elements(prep, [i, j]) == 2
    assert count_elements(prep, [i, i]) == 1
    loose = dataclasses.replace(prep, equiv_tol=10.0, equivalent={})
    assert count_elements(loose, [i, j]) == 1


def test_metric_equivalence(unit_square, unit_dec):
    graph = build_pair_graph(unit_dec)
    lo, hi = metric_equivalence_ratio(unit_square, unit_dec, graph, samples=10)
    assert 0.0 < lo <= hi < math.inf
    assert metric_equivalence_ratio(unit_square, unit_dec, PairGraph(1, ())) == (1.0, 1.0)


def test_trace_continuity_on_the_slit(slit_square, slit_dec, slit_anchors):
    data = BoundaryData.trace_of(synthesize_test_field(slit_square, "slit-witness"))
    A = trace_continuity(slit_square, data, slit_dec, slit_anchors, limit=40)
    assert 0.0 <= A < math.inf


def test_boundary_data_documents(slit_square, slit_anchors):
    data = BoundaryData.from_dict({"0,0,0": 0.0, "0,0,1": "1"}, slit_square)
    assert data.values == {"0,0,0": 0.0, "0,0,1": 1.0}
    assert data.provenance == "sampled-table"
    with pytest.raises(MissingCubeDataError, match="no boundary value"):
        cube_values(data, slit_anchors)
    traced = BoundaryData.from_dict({"analytic": "slit-witness"}, slit_square)
    values = cube_values(traced, slit_anchors)
    assert set(values) == set(slit_anchors)
    assert all(-1e-6 <= v <= 1.0 + 1e-6 for v in values.values())
    with pytest.raises(DomainFileError):
        BoundaryData.from_dict(["0,0,0"], slit_square)
    with pytest.raises(DomainFileError):
        BoundaryData.from_dict({"0,0,0": "high"}, slit_square)


def test_report_rejects_unknown_fields():
    with pytest.raises(ValidationError):
        PipelineReport(command="extend", depth=4, bogus=1)
    report = PipelineReport(command="extend", depth=4, trace_residuals=[np.float64(0.5)])
    assert report.model_dump()["trace_residuals"] == [0.5]
