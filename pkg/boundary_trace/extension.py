"""Whitney-type extension F = sum_Q phi_Q P_Q built from boundary jets.

The partition of unity uses a tensor product of C2 quintic smoothstep
profiles, equal to 1 on Q and vanishing outside Q* = (9/8)Q. All
derivatives are analytic; finite differences only appear in tests.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Protocol

from boundary_trace.errors import (
    DomainFileError,
    MissingCubeDataError,
    NormalizationVanishesError,
    RayExitsCoveredRegionError,
    UncoveredPointError,
)
from boundary_trace.geometry import Point, PolygonalDomain, as_point, distance_to_features
from boundary_trace.intrinsic_metric import SplitElement, intrinsic_distance
from boundary_trace.whitney import STAR_FACTOR, CubeAnchor, WhitneyDecomposition, intersecting_pairs

logger = logging.getLogger(__name__)

DIM = 2
SNAP_ULPS = 16
MONOTONE_FROM = 2.0**-6


class FieldValue(tuple):
    """(value, gradient, hessian) of a C2 field at one point."""

    def __new__(cls, value: float, gradient: np.ndarray, hessian: np.ndarray):
        return super().__new__(cls, (value, gradient, hessian))

    @property
    def value(self) -> float:
        return self[0]

    @property
    def gradient(self) -> np.ndarray:
        return self[1]

    @property
    def hessian(self) -> np.ndarray:
        return self[2]


class C2Field(Protocol):
    def evaluate(self, x: Any) -> FieldValue:
        ...


def point_xy(x: Any) -> Tuple[float, float]:
    if isinstance(x, Point):
        return float(x.x), float(x.y)
    return float(x[0]), float(x[1])


# --- partition of unity ---


def smoothstep(u: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep and its first two derivatives, u clipped to [0, 1]."""
    u = np.clip(u, 0.0, 1.0)
    s = u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
    ds = 30.0 * u * u * (1.0 - u) ** 2
    d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return s, ds, d2s


def _profile(delta: np.ndarray, r: np.ndarray, rs: np.ndarray):
    width = rs - r
    u = (rs - np.abs(delta)) / width
    du = -np.sign(delta) / width
    s, ds, d2s = smoothstep(u)
    return s, ds * du, d2s * du * du


@dataclass(frozen=True)
class PartitionOfUnity:
    """Bumps psi_Q supported on Q*; phi_Q = psi_Q / sum_K psi_K."""

    cx: np.ndarray
    cy: np.ndarray
    r: np.ndarray

    @property
    def rs(self) -> np.ndarray:
        return self.r * float(STAR_FACTOR)

    def __len__(self) -> int:
        return len(self.r)

    def covering(self, x: Any) -> np.ndarray:
        """Indices of the closed cubes containing ``x``."""
        px, py = point_xy(x)
        return np.flatnonzero((np.abs(self.cx - px) <= self.r) & (np.abs(self.cy - py) <= self.r))

    def bumps(self, x: Any):
        """Active indices with psi, grad psi (k, 2) and hess psi (k, 2, 2)."""
        px, py = point_xy(x)
        dx, dy = px - self.cx, py - self.cy
        rs = self.rs
        idx = np.flatnonzero((np.abs(dx) < rs) & (np.abs(dy) < rs))
        r, rs = self.r[idx], rs[idx]
        bx, dbx, d2bx = _profile(dx[idx], r, rs)
        by, dby, d2by = _profile(dy[idx], r, rs)
        psi = bx * by
        grad = np.stack([dbx * by, bx * dby], axis=1)
        hess = np.empty((len(idx), 2, 2))
        hess[:, 0, 0] = d2bx * by
        hess[:, 0, 1] = hess[:, 1, 0] = dbx * dby
        hess[:, 1, 1] = bx * d2by
        return idx, psi, grad, hess

    def phi(self, x: Any):
        """phi_Q with gradient and Hessian at ``x`` for every active cube.

        Raises:
            UncoveredPointError: If no cube contains ``x``
            NormalizationVanishesError: If the bump sum is zero at a covered point
        """
        if not len(self.covering(x)):
            px, py = point_xy(x)
            raise UncoveredPointError(f"point ({px}, {py}) is not covered by the decomposition")
        idx, psi, grad, hess = self.bumps(x)
        total = psi.sum()
        if total <= 0.0:
            raise NormalizationVanishesError(f"bump sum vanishes at {point_xy(x)}")
        g_total = grad.sum(axis=0)
        h_total = hess.sum(axis=0)
        phi = psi / total
        dphi = grad / total - np.outer(psi, g_total) / total**2
        outer_gs = np.einsum("ki,j->kij", grad, g_total)
        d2phi = (
            hess / total
            - (outer_gs + outer_gs.transpose(0, 2, 1)) / total**2
            - psi[:, None, None] * h_total[None, :, :] / total**2
            + 2.0 * psi[:, None, None] * np.outer(g_total, g_total)[None, :, :] / total**3
        )
        return idx, phi, dphi, d2phi


def build_partition(dec: WhitneyDecomposition) -> PartitionOfUnity:
    cx, cy, r = dec.arrays() if dec.cubes else (np.zeros(0), np.zeros(0), np.zeros(0))
    return PartitionOfUnity(cx, cy, r)


STRIP_OFFSETS = (Fraction(33, 32), Fraction(34, 32), Fraction(35, 32))


def _cube_grid(cx: float, cy: float, r: float, per_side: int) -> List[Tuple[float, float]]:
    """Points of Q on a per_side x per_side lattice plus lines through the strip Q* minus Q.

    The strip lines sit at fixed fractions of r, where the bumps of Q bend.
    """
    strip = [float(f) * r for f in STRIP_OFFSETS]
    ticks = sorted(set(np.linspace(-r, r, per_side).tolist()) | set(strip) | {-s for s in strip})
    return [(cx + dx, cy + dy) for dy in ticks for dx in ticks]


def _covered_grid(partition: PartitionOfUnity, k: int, per_side: int) -> Iterator[Tuple[float, float]]:
    for x in _cube_grid(partition.cx[k], partition.cy[k], partition.r[k], per_side):
        if len(partition.covering(x)):
            yield x


def partition_constants(partition: PartitionOfUnity, per_side: int = 5) -> Dict[int, float]:
    """Measured C_beta with |D^beta phi_Q| <= C_beta (diam Q)^-|beta|."""
    constants = {0: 0.0, 1: 0.0, 2: 0.0}
    diam = 2.0 * partition.r
    for k in range(len(partition)):
        for x in _covered_grid(partition, k, per_side):
            idx, phi, dphi, d2phi = partition.phi(x)
            d = diam[idx]
            constants[0] = max(constants[0], float(np.max(phi)))
            constants[1] = max(constants[1], float(np.max(np.abs(dphi).max(axis=1) * d)))
            constants[2] = max(constants[2], float(np.max(np.abs(d2phi).max(axis=(1, 2)) * d * d)))
    return constants


# --- jets and the extension ---


@dataclass(frozen=True)
class AffinePolynomial:
    """P(x) = value + <gradient, x - anchor>."""

    value: float
    gradient: Tuple[float, float]
    anchor: Point

    def __call__(self, x: Any) -> float:
        px, py = point_xy(x)
        ax, ay = self.anchor.as_float()
        return self.value + self.gradient[0] * (px - ax) + self.gradient[1] * (py - ay)


@dataclass
class BoundaryJet:
    """f(omega_Q) and g(Q) per cube index, with a compatibility constant."""

    f_values: Dict[int, float]
    g_values: Dict[int, Tuple[float, float]]
    eta: float = 0.0

    def missing(self, count: int) -> List[int]:
        return [k for k in range(count) if k not in self.f_values or k not in self.g_values]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "f": {str(k): v for k, v in sorted(self.f_values.items())},
            "g": {str(k): list(v) for k, v in sorted(self.g_values.items())},
            "eta": self.eta,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BoundaryJet":
        try:
            f_values = {int(k): float(v) for k, v in data["f"].items()}
            g_values = {int(k): (float(v[0]), float(v[1])) for k, v in data["g"].items()}
            eta = float(data.get("eta", 0.0))
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise DomainFileError(f"malformed jet document: {e}") from e
        return cls(f_values, g_values, eta)


def _require(jet: BoundaryJet, count: int) -> None:
    missing = jet.missing(count)
    if missing:
        raise MissingCubeDataError(f"missing cube data for {len(missing)} cubes (first: {missing[0]})")


@dataclass(frozen=True)
class JetCompatReport:
    max_fg_ratio: float
    max_g_ratio: float
    min_eta: float
    eta: float
    passed: bool
    per_cube: Dict[int, float] = field(default_factory=dict)


def check_jet_compat(
    jet: BoundaryJet, dec: WhitneyDecomposition, anchors: Mapping[int, CubeAnchor]
) -> JetCompatReport:
    """Largest scaled residuals of the two compatibility conditions over intersecting pairs.

    Args:
        jet: Values f(omega_Q) and gradients g(Q)
        dec: Decomposition the jet lives on
        anchors: a_Q per cube

    Returns:
        JetCompatReport whose ``min_eta`` is the smallest feasible eta
    """
    _require(jet, len(dec.cubes))
    fg_worst = g_worst = 0.0
    per_cube: Dict[int, float] = {}
    for i, j in intersecting_pairs(dec):
        length = float(dec.cubes[i].diam + dec.cubes[j].diam)
        ai = np.array(anchors[i].a_q.point.as_float())
        aj = np.array(anchors[j].a_q.point.as_float())
        gi, gj = np.array(jet.g_values[i]), np.array(jet.g_values[j])
        fg = max(
            abs(jet.f_values[i] - jet.f_values[j] - float(gj @ (ai - aj))),
            abs(jet.f_values[j] - jet.f_values[i] - float(gi @ (aj - ai))),
        ) / length**2
        g = float(np.max(np.abs(gi - gj))) / length
        worst = max(fg, g)
        per_cube[i] = max(per_cube.get(i, 0.0), worst)
        per_cube[j] = max(per_cube.get(j, 0.0), worst)
        fg_worst, g_worst = max(fg_worst, fg), max(g_worst, g)
    min_eta = max(fg_worst, g_worst)
    passed = min_eta <= jet.eta * (1.0 + 1e-9) + 1e-12
    return JetCompatReport(fg_worst, g_worst, min_eta, jet.eta, passed, per_cube)


@dataclass(frozen=True)
class ExtensionField:
    dec: WhitneyDecomposition
    partition: PartitionOfUnity
    polynomials: Tuple[AffinePolynomial, ...]
    constants: np.ndarray
    gradients: np.ndarray

    def evaluate(self, x: Any) -> FieldValue:
        """F, grad F and the Hessian at ``x`` relative to a covering cube's P_K."""
        idx, phi, dphi, d2phi = self.partition.phi(x)
        px, py = point_xy(x)
        base = int(self.partition.covering(x)[0])
        c0, g0 = self.constants[base], self.gradients[base]
        dc = self.constants[idx] - c0
        scale = np.maximum(np.maximum(np.abs(self.constants[idx]), abs(c0)), 1.0)
        dg = self.gradients[idx] - g0
        dc[(np.abs(dc) <= SNAP_ULPS * np.finfo(float).eps * scale) & ~dg.any(axis=1)] = 0.0
        diff = dc + dg @ np.array([px, py])
        value = c0 + g0 @ np.array([px, py]) + float(phi @ diff)
        gradient = g0 + dphi.T @ diff + phi @ dg
        cross = np.einsum("ki,kj->ij", dphi, dg)
        hessian = np.einsum("kij,k->ij", d2phi, diff) + cross + cross.T
        return FieldValue(float(value), gradient, hessian)


def whitney_extend(
    dec: WhitneyDecomposition, anchors: Mapping[int, CubeAnchor], jet: BoundaryJet
) -> ExtensionField:
    """Assemble F = sum phi_Q P_Q with P_Q(x) = f(omega_Q) + <g(Q), x - a_Q>."""
    _require(jet, len(dec.cubes))
    report = check_jet_compat(jet, dec, anchors)
    if not report.passed:
        logger.warning(
            f"Jet fails compatibility at eta={jet.eta:.6g} (needs {report.min_eta:.6g}); the seminorm may blow up"
        )
    polynomials = []
    for k in range(len(dec.cubes)):
        g = jet.g_values[k]
        polynomials.append(AffinePolynomial(float(jet.f_values[k]), (float(g[0]), float(g[1])), anchors[k].a_q.point))
    gradients = np.array([p.gradient for p in polynomials], dtype=float).reshape(-1, DIM)
    anchor_xy = np.array([p.anchor.as_float() for p in polynomials], dtype=float).reshape(-1, DIM)
    constants = np.array([p.value for p in polynomials], dtype=float) - np.einsum("ki,ki->k", gradients, anchor_xy)
    logger.info(f"Built extension over {len(dec.cubes)} cubes")
    return ExtensionField(dec, build_partition(dec), tuple(polynomials), constants, gradients)


def eval_field(F: C2Field, x: Any) -> FieldValue:
    return F.evaluate(x)


# --- verifiers ---


@dataclass(frozen=True)
class SeminormEstimate:
    value: float
    sup_xx: float
    sup_xy: float
    sup_yy: float
    samples: int
    per_side: int


def seminorm_estimate(F: ExtensionField, per_side: int = 5) -> SeminormEstimate:
    """Sum over |alpha| = 2 of the sampled sup |D^alpha F| on grids over each Q*.

    Grids with per_side = 2^k + 1 are nested, so the estimate never
    decreases when ``per_side`` is refined that way. Grid points outside
    the covered region are skipped.
    """
    sup = np.zeros(3)
    samples = 0
    part = F.partition
    for k in range(len(part)):
        for x in _covered_grid(part, k, per_side):
            h = F.evaluate(x).hessian
            sup = np.maximum(sup, np.abs([h[0, 0], h[0, 1], h[1, 1]]))
            samples += 1
    return SeminormEstimate(float(sup.sum()), float(sup[0]), float(sup[1]), float(sup[2]), samples, per_side)


@dataclass(frozen=True)
class TaylorViolation:
    x: Point
    y: Point
    kind: str
    lhs: float
    rhs: float


@dataclass(frozen=True)
class TaylorReport:
    pairs: int
    seminorm: float
    violations: Tuple[TaylorViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_taylor(
    F: C2Field,
    pairs: Iterable[Tuple[Any, Any]],
    domain: PolygonalDomain,
    seminorm: Optional[float] = None,
    margin: float = 1e-8,
) -> TaylorReport:
    """Check the Taylor remainder and gradient Lipschitz bounds in the intrinsic metric."""
    pairs = [(as_point(x), as_point(y)) for x, y in pairs]
    if seminorm is None:
        known = getattr(F, "seminorm", None)
        seminorm = float(known) if known is not None else seminorm_estimate(F).value
    S = seminorm + margin
    violations = []
    for x, y in pairs:
        d = float(intrinsic_distance(domain, x, y))
        fx, fy = F.evaluate(x), F.evaluate(y)
        step = np.array(x.as_float()) - np.array(y.as_float())
        remainder = abs(fx.value - fy.value - float(fy.gradient @ step))
        bound = DIM * S * d * d + margin
        if remainder > bound:
            violations.append(TaylorViolation(x, y, "taylor", remainder, bound))
        spread = float(np.max(np.abs(fx.gradient - fy.gradient)))
        if spread > S * d + margin:
            violations.append(TaylorViolation(x, y, "gradient", spread, S * d + margin))
    if violations:
        logger.warning(f"Taylor verifier found {len(violations)} violations over {len(pairs)} pairs")
    return TaylorReport(len(pairs), seminorm, tuple(violations))


# --- trace probes ---


@dataclass(frozen=True)
class ProbeSample:
    t: float
    point: Tuple[float, float]
    value: float
    gradient: Tuple[float, float]


@dataclass(frozen=True)
class TraceProbe:
    element: SplitElement
    samples: Tuple[ProbeSample, ...]
    limit_value: float
    limit_gradient: Tuple[float, float]
    extrapolated: float
    converged: bool
    monotone: bool
    final_gap: float
    truncated: bool


def trace_probe(
    F: C2Field,
    omega: SplitElement,
    steps: int = 16,
    start: int = 1,
    tol: float = 1e-5,
    truncate: bool = False,
) -> TraceProbe:
    """Sample F along x_t = l(omega) + t (w - l(omega)) for t = 2^-start .. 2^-steps.

    The limit estimate is the last sampled value; ``extrapolated`` adds the
    first-order correction <grad F(x_t), l(omega) - x_t>. A probe converges
    when successive gaps do not grow for t <= 2^-6 and the final gap is
    below ``tol``.

    Raises:
        RayExitsCoveredRegionError: When a sample is uncovered and ``truncate``
            is off, or when no sample is covered at all
    """
    samples: List[ProbeSample] = []
    truncated = False
    for k in range(start, steps + 1):
        t = Fraction(1, 2**k)
        x = omega.ray_point(t)
        try:
            v = F.evaluate(x)
        except UncoveredPointError as e:
            if not truncate or not samples:
                raise RayExitsCoveredRegionError(
                    f"probe toward {omega.key} left the covered region at t=2^-{k}; increase the depth"
                ) from e
            truncated = True
            break
        samples.append(ProbeSample(float(t), x.as_float(), v.value, (float(v.gradient[0]), float(v.gradient[1]))))
    gaps = [abs(b.value - a.value) for a, b in zip(samples, samples[1:])]
    final_gap = gaps[-1] if gaps else math.inf
    tail = [g for s, g in zip(samples[1:], gaps) if s.t <= MONOTONE_FROM]
    monotone = all(b <= a + 1e-12 for a, b in zip(tail, tail[1:]))
    last = samples[-1]
    anchor = np.array(omega.anchor.point.as_float())
    extrapolated = last.value + float(np.array(last.gradient) @ (anchor - np.array(last.point)))
    if truncated:
        logger.debug(f"Probe toward {omega.key} truncated after {len(samples)} samples")
    return TraceProbe(
        omega,
        tuple(samples),
        last.value,
        last.gradient,
        extrapolated,
        monotone and final_gap < tol,
        monotone,
        final_gap,
        truncated,
    )


def trace_recovery_constant(
    domain: PolygonalDomain, probes: Sequence[TraceProbe], targets: Sequence[float]
) -> float:
    """Smallest C with |F(x_t) - f(omega)| <= C (dist^2 + |grad F(x_t)| dist) on all samples."""
    worst = 0.0
    for probe, target in zip(probes, targets):
        for s in probe.samples:
            d = float(distance_to_features(domain, Point.of(*s.point)))
            scale = d * d + float(np.max(np.abs(s.gradient))) * d
            residual = abs(s.value - target)
            if scale > 0:
                worst = max(worst, residual / scale)
    return worst
