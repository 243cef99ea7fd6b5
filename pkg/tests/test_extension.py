import math

import numpy as np
import pytest

from boundary_trace.errors import DomainFileError, MissingCubeDataError, RayExitsCoveredRegionError, UncoveredPointError
from boundary_trace.extension import (
    BoundaryJet,
    FieldValue,
    build_partition,
    check_jet_compat,
    eval_field,
    partition_constants,
    point_xy,
    seminorm_estimate,
    smoothstep,
    trace_probe,
    trace_recovery_constant,
    verify_taylor,
    whitney_extend,
)
from boundary_trace.fields import QuadraticField, synthesize_test_field
from boundary_trace.geometry import Point
from boundary_trace.intrinsic_metric import element_for_direction


def _affine(x, y):
    return 1.0 + 2.0 * x - 3.0 * y


@pytest.fixture(scope="module")
def affine_jet(unit_anchors):
    f_values, g_values = {}, {}
    for k, anchor in unit_anchors.items():
        f_values[k] = _affine(*anchor.a_q.point.as_float())
        g_values[k] = (2.0, -3.0)
    return BoundaryJet(f_values, g_values)


@pytest.fixture(scope="module")
def affine_extension(unit_dec, unit_anchors, affine_jet):
    return whitney_extend(unit_dec, unit_anchors, affine_jet)


def test_smoothstep_endpoints():
    s, ds, d2s = smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert s.tolist() == [0.0, 0.0, 0.5, 1.0, 1.0]
    assert ds[1] == ds[3] == 0.0
    assert d2s[1] == d2s[3] == d2s[2] == 0.0


@pytest.mark.parametrize("x", [(0.5, 0.5), (0.51, 0.503), (0.3, 0.7), (0.125, 0.2)])
def test_partition_sums_to_one(unit_dec, x):
    idx, phi, dphi, d2phi = build_partition(unit_dec).phi(x)
    assert len(idx) >= 1
    assert phi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(dphi.sum(axis=0)).max() < 1e-9
    assert np.abs(d2phi.sum(axis=0)).max() < 1e-6


def test_partition_derivatives_match_finite_differences(unit_dec):
    partition = build_partition(unit_dec)
    x = np.array([0.51, 0.503])
    idx, phi, dphi, d2phi = partition.phi(x)
    h = 1e-7
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h
        ip, pp, dp, _ = partition.phi(x + step)
        im, pm, dm, _ = partition.phi(x - step)
        assert ip.tolist() == im.tolist() == idx.tolist()
        assert np.allclose((pp - pm) / (2 * h), dphi[:, axis], atol=1e-6)
        assert np.allclose((dp - dm) / (2 * h), d2phi[:, :, axis], atol=1e-4)


def test_uncovered_points(unit_dec):
    partition = build_partition(unit_dec)
    with pytest.raises(UncoveredPointError):
        partition.phi((2.0, 2.0))
    with pytest.raises(UncoveredPointError):
        partition.phi((1e-4, 0.5))


def test_partition_constants(unit_dec):
    constants = partition_constants(build_partition(unit_dec), per_side=3)
    assert constants[0] <= 1.0 + 1e-12
    assert 0.0 < constants[1] < np.inf
    assert 0.0 < constants[2] < np.inf


def test_affine_jet_is_reproduced(affine_extension):
    for x in [(0.5, 0.5), (0.51, 0.503), (0.2, 0.81), (0.9, 0.15)]:
        value = eval_field(affine_extension, x)
        assert value.value == pytest.approx(_affine(*x), abs=1e-12)
        assert np.allclose(value.gradient, [2.0, -3.0], atol=1e-12)
        assert not value.hessian.any()
    assert seminorm_estimate(affine_extension, per_side=3).value == 0.0


def test_affine_jet_is_compatible(unit_dec, unit_anchors, affine_jet):
    report = check_jet_compat(affine_jet, unit_dec, unit_anchors)
    assert report.min_eta < 1e-9


def test_perturbed_jet_fails_compat(unit_dec, unit_anchors, affine_jet):
    bumped = BoundaryJet(dict(affine_jet.f_values), dict(affine_jet.g_values))
    bumped.f_values[0] += 0.5
    report = check_jet_compat(bumped, unit_dec, unit_anchors)
    assert report.min_eta > 1.0
    assert not report.passed
    assert report.per_cube[0] == report.max_fg_ratio


def test_missing_jet_entries(unit_dec, unit_anchors, affine_jet):
    partial = BoundaryJet({k: v for k, v in affine_jet.f_values.items() if k}, affine_jet.g_values)
    with pytest.raises(MissingCubeDataError, match="first: 0"):
        whitney_extend(unit_dec, unit_anchors, partial)


def test_jet_document():
    jet = BoundaryJet({0: 1.0, 1: 2.0}, {0: (0.0, 1.0), 1: (1.0, 0.0)}, eta=0.25)
    again = BoundaryJet.from_dict(jet.to_dict())
    assert again.f_values == jet.f_values
    assert again.g_values == jet.g_values
    assert again.eta == 0.25
    with pytest.raises(DomainFileError):
        BoundaryJet.from_dict({"f": {"0": 1.0}})
    with pytest.raises(DomainFileError):
        BoundaryJet.from_dict({"f": {"0": 1.0}, "g": {"0": [1.0]}})


def test_taylor_bounds_for_quadratic(unit_square):
    field = QuadraticField(((1.0, 0.5), (0.0, -2.0)), (0.5, 1.0), 3.0)
    pairs = [((0.25, 0.25), (0.75, 0.5)), ((0.1, 0.9), (0.9, 0.1)), ((0.5, 0.5), (0.5, 0.5))]
    report = verify_taylor(field, pairs, unit_square)
    assert report.ok
    assert report.pairs == 3
    assert report.seminorm == field.seminorm
    strict = verify_taylor(field, pairs, unit_square, seminorm=0.0)
    assert not strict.ok
    assert {v.kind for v in strict.violations} == {"taylor", "gradient"}


def test_trace_probe_across_the_slit(slit_square):
    field = synthesize_test_field(slit_square, "slit-witness")
    top = element_for_direction(slit_square, (0, 0), Point.of(0, 1))
    bottom = element_for_direction(slit_square, (0, 0), Point.of(0, -1))
    up, down = trace_probe(field, top), trace_probe(field, bottom)
    assert up.extrapolated == 0.0
    assert down.extrapolated == 1.0
    assert up.converged and down.converged
    assert up.monotone
    assert len(up.samples) == 16
    assert trace_recovery_constant(slit_square, [up, down], [0.0, 1.0]) == 0.0


def test_trace_probe_leaves_the_covered_region(affine_extension, unit_anchors):
    omega = unit_anchors[0].omega_q
    with pytest.raises(RayExitsCoveredRegionError, match="increase the depth"):
        trace_probe(affine_extension, omega)
    probe = trace_probe(affine_extension, omega, truncate=True)
    assert probe.truncated
    assert probe.samples
    assert probe.extrapolated == pytest.approx(_affine(0.0, 0.0), abs=1e-9)


class _Staircase:
    """|x - anchor| scaled by 1 or 3 on alternate dyadic shells, so successive gaps oscillate."""

    def __init__(self, anchor):
        self.ax, self.ay = anchor.as_float()

    def evaluate(self, x):
        px, py = point_xy(x)
        rho = max(abs(px - self.ax), abs(py - self.ay))
        factor = 1.0 if round(math.log2(rho)) % 2 == 0 else 3.0
        return FieldValue(factor * rho, np.zeros(2), np.zeros((2, 2)))


def test_oscillating_trace_does_not_converge(unit_square):
    omega = element_for_direction(unit_square, (0, "0.5"), Point.of(1, 0))
    trace = trace_probe(_Staircase(omega.anchor.point), omega)
    assert trace.final_gap < 1e-5
    assert not trace.monotone
    assert not trace.converged


def test_seminorm_sees_the_transition_strips(unit_square, unit_dec, unit_anchors):
    f_values, g_values = {}, {}
    for k, anchor in unit_anchors.items():
        ax, _ = anchor.a_q.point.as_float()
        f_values[k] = ax * ax
        g_values[k] = (2.0 * ax, 0.0)
    F = whitney_extend(unit_dec, unit_anchors, BoundaryJet(f_values, g_values))
    coarse = seminorm_estimate(F, per_side=3)
    assert coarse.value >= 2.0
    assert seminorm_estimate(F, per_side=5).value >= coarse.value
    assert verify_taylor(F, [((0.3, 0.3), (0.7, 0.3))], unit_square).seminorm >= 2.0
