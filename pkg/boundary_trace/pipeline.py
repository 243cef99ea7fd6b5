"""End-to-end boundary-value extension, finiteness checks and visible triples.

Typical use:

    domain = load_fixture("slit_square")
    data = BoundaryData.trace_of(synthesize_test_field(domain, "slit-witness"))
    field, report = extend_from_boundary(domain, data, depth=5)
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from boundary_trace.errors import DomainFileError, IsolatedCubeError, MissingCubeDataError, NonConvergenceError
from boundary_trace.extension import (
    BoundaryJet,
    C2Field,
    ExtensionField,
    check_jet_compat,
    seminorm_estimate,
    trace_probe,
    trace_recovery_constant,
    whitney_extend,
)
from boundary_trace.fields import synthesize_test_field
from boundary_trace.geometry import Cube, Point, PolygonalDomain, add, contains, cross, dist_inf, norm_inf, scale, sub
from boundary_trace.intrinsic_metric import SplitElement, completed_distance, element_equiv, intrinsic_distance
from boundary_trace.selection import (
    AffineConstraint,
    PairGraph,
    Selection,
    Subset,
    build_pair_graph,
    finiteness_subsets,
    hyperplanes_from_data,
    lipschitz_selection,
    path_metric_rows,
    project_to_affine,
    subset_lambda,
)
from boundary_trace.whitney import (
    CubeAnchor,
    WhitneyDecomposition,
    anchors,
    intersecting_pairs,
    refine_4n,
    whitney_decompose,
)

logger = logging.getLogger(__name__)

DIM = 2
SUBSET_EDGES = 2 ** (DIM - 1)
MAX_ELEMENTS = 3 * 2 ** (DIM - 1)
ALPHA_SWEEP = (1, 2, 4, 8)
EPSILON = 1e-12


# --- boundary data ---


class BoundaryData:
    """Boundary values keyed by split element ("x,y,sectorId").

    Values come from a table, an analytic callback, or the trace of a
    closed-form field evaluated along each element's witness ray.
    """

    def __init__(
        self,
        values: Optional[Mapping[str, float]] = None,
        provenance: str = "sampled-table",
        callback: Optional[Callable[[SplitElement], float]] = None,
    ):
        self.values: Dict[str, float] = dict(values or {})
        self.provenance = provenance
        self.callback = callback
        self._cache: Dict[str, float] = {}

    @classmethod
    def trace_of(cls, field: C2Field, steps: int = 24) -> "BoundaryData":
        def trace(omega: SplitElement) -> float:
            return trace_probe(field, omega, steps=steps).extrapolated

        return cls(provenance="trace-of-field", callback=trace)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], domain: PolygonalDomain) -> "BoundaryData":
        """Parse a boundary-data document.

        Example:
            {"analytic": "slit-witness"} or {"0,1,0": 0.5, "0.5,0,1": 1.0}
        """
        if not isinstance(data, Mapping):
            raise DomainFileError("boundary data must be a JSON object")
        if "analytic" in data:
            field = synthesize_test_field(
                domain, data["analytic"], a=data.get("a"), b=float(data.get("b", 0.0)), A=data.get("A")
            )
            return cls.trace_of(field)
        try:
            values = {str(k): float(v) for k, v in data.items()}
        except (TypeError, ValueError) as e:
            raise DomainFileError(f"boundary values must be numbers: {e}") from e
        return cls(values)

    def value(self, omega: SplitElement) -> float:
        key = omega.key
        if key in self.values:
            return self.values[key]
        if self.callback is None:
            raise MissingCubeDataError(f"no boundary value for element {key}")
        if key not in self._cache:
            self._cache[key] = float(self.callback(omega))
        return self._cache[key]


def cube_values(data: BoundaryData, table: Mapping[int, CubeAnchor]) -> Dict[int, float]:
    """f(omega_Q) for every cube."""
    return {k: data.value(anchor.omega_q) for k, anchor in table.items()}


# --- reports ---


class PipelineReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: str
    depth: int
    flavor: str = "standard"
    cubes: int = 0
    nodes: int = 0
    edges: int = 0
    status: str = "ok"
    eta_min: Optional[float] = None
    lambda_full: Optional[float] = None
    lambda_subset_max: Optional[float] = None
    gamma_hat: Optional[float] = None
    gamma_extension: Optional[float] = None
    seminorm_out: Optional[float] = None
    eta_over_lambda: Optional[float] = None
    g_over_lambda: Optional[float] = None
    trace_residuals: List[float] = Field(default_factory=list)
    trace_recovery_constant: Optional[float] = None
    seed: Optional[int] = None
    budget: Optional[int] = None
    subsets: int = 0
    subset_lambdas: List[Optional[float]] = Field(default_factory=list)
    subset_histogram: Dict[str, int] = Field(default_factory=dict)
    max_elements: int = 0
    infeasible_subsets: List[List[int]] = Field(default_factory=list)
    monotone: Optional[bool] = None
    alpha: Optional[float] = None
    alpha_hat: Optional[float] = None
    alpha_sweep: Dict[str, int] = Field(default_factory=dict)
    visible_subsets: Optional[int] = None
    degenerate_triples: Optional[int] = None
    unseen_triples: Optional[int] = None
    gamma_hat_all: Optional[float] = None
    timings: Dict[str, float] = Field(default_factory=dict)


class _Timings:
    def __init__(self, record: bool):
        self.record = record
        self.values: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        yield
        elapsed = time.perf_counter() - start
        logger.info(f"Stage {name} took {elapsed:.3f}s")
        if self.record:
            self.values[name] = round(elapsed, 6)


@dataclass
class Prepared:
    """Decomposition, anchors, per-cube values, pair graph and constraints."""

    domain: PolygonalDomain
    dec: WhitneyDecomposition
    table: Dict[int, CubeAnchor]
    f: Dict[int, float]
    graph: PairGraph
    constraints: List[AffineConstraint]
    equiv_tol: float
    equivalent: Dict[Tuple[str, str], bool]


def prepare(
    domain: PolygonalDomain,
    data: Optional[BoundaryData],
    depth: int,
    flavor: str = "standard",
    max_skirt_fraction: float = 0.5,
    values: Optional[Mapping[int, float]] = None,
    consistency_tol: float = 1e-9,
    strict: bool = True,
    timings: Optional[_Timings] = None,
    equiv_tol: float = 1e-4,
) -> Prepared:
    """Run the shared front of every pipeline.

    Args:
        values: Per-cube boundary values overriding those read from ``data``
        equiv_tol: Completed-distance threshold below which two elements at
            one anchor count as the same element
    """
    timings = timings or _Timings(False)
    with timings.stage("decompose"):
        dec = whitney_decompose(domain, depth, max_skirt_fraction)
        if flavor == "refined":
            dec = refine_4n(dec)
    with timings.stage("anchors"):
        table = anchors(dec, domain)
    f = dict(values) if values is not None else cube_values(data, table)
    with timings.stage("pair-graph"):
        graph = build_pair_graph(dec)
        constraints = hyperplanes_from_data(graph, table, f, tol=consistency_tol, strict=strict)
    return Prepared(domain, dec, table, f, graph, constraints, equiv_tol, {})


# --- jets ---


@dataclass(frozen=True)
class FieldJet:
    jet: BoundaryJet
    graph: PairGraph
    constraints: Tuple[AffineConstraint, ...]
    node_values: np.ndarray


def jet_from_field(
    field: C2Field,
    dec: WhitneyDecomposition,
    table: Mapping[int, CubeAnchor],
    steps: int = 20,
    tol: float = 1e-5,
) -> FieldJet:
    """Traces f(omega_Q), g(Q) of a field plus node values G(S) = Pr(g(Q_S); Y_S).

    Raises:
        NonConvergenceError: If a probe toward some a_Q does not settle
    """
    f_values: Dict[int, float] = {}
    g_values: Dict[int, Tuple[float, float]] = {}
    for k, anchor in table.items():
        probe = trace_probe(field, anchor.omega_q, steps=steps, tol=tol)
        if not probe.converged:
            raise NonConvergenceError(
                f"probe did not converge toward {anchor.omega_q.key} "
                f"(final gap {probe.final_gap:.3g}, monotone tail {probe.monotone})"
            )
        f_values[k] = probe.extrapolated
        g_values[k] = probe.limit_gradient
    jet = BoundaryJet(f_values, g_values)
    jet.eta = check_jet_compat(jet, dec, table).min_eta
    graph = build_pair_graph(dec)
    constraints = hyperplanes_from_data(graph, table, f_values)
    node_values = np.array(
        [project_to_affine(g_values[p.q], constraints[n]) for n, p in enumerate(graph.pairs)]
    ).reshape(-1, DIM)
    return FieldJet(jet, graph, tuple(constraints), node_values)


def field_jet_constants(
    field: C2Field, dec: WhitneyDecomposition, table: Mapping[int, CubeAnchor], jet: BoundaryJet
) -> Tuple[float, float]:
    """Measured factors against 20n ||F|| ||a - a'|| D and 10 ||F|| D, D = diam Q + diam Q'."""
    seminorm = float(getattr(field, "seminorm", 0.0))
    fg_worst = g_worst = 0.0
    for i, j in intersecting_pairs(dec):
        length = float(dec.cubes[i].diam + dec.cubes[j].diam)
        for q, k in ((i, j), (j, i)):
            aq = np.array(table[q].a_q.point.as_float())
            ak = np.array(table[k].a_q.point.as_float())
            gq, gk = np.array(jet.g_values[q]), np.array(jet.g_values[k])
            fg = abs(jet.f_values[q] - jet.f_values[k] - float(gk @ (aq - ak)))
            gap = float(np.max(np.abs(aq - ak)))
            if seminorm > 0 and gap > 0:
                fg_worst = max(fg_worst, fg / (seminorm * gap * length))
            if seminorm > 0:
                g_worst = max(g_worst, float(np.max(np.abs(gq - gk))) / (seminorm * length))
    return fg_worst, g_worst


def g_from_selection(graph: PairGraph, sel: Selection, dec: WhitneyDecomposition) -> Dict[int, Tuple[float, float]]:
    """g(Q) = G({Q, Q_T}) with Q_T the lowest-index neighbor of Q other than Q."""
    index = graph.node_index()
    result = {}
    for q, near in enumerate(dec.adjacency):
        others = [k for k in near if k != q]
        if not others:
            raise IsolatedCubeError(f"cube {q} has no neighbor")
        t = others[0]
        node = index[(min(q, t), max(q, t))]
        result[q] = (float(sel.values[node][0]), float(sel.values[node][1]))
    return result


# --- extension from boundary values ---


def _probe_residuals(
    F: ExtensionField, prep: Prepared, count: int, seed: int, tol: float
) -> Tuple[List[float], float]:
    n = len(prep.dec.cubes)
    rng = np.random.default_rng(seed)
    chosen = sorted(int(k) for k in rng.choice(n, size=min(count, n), replace=False))
    probes, targets, residuals = [], [], []
    for k in chosen:
        omega = prep.table[k].omega_q
        probe = trace_probe(F, omega, steps=24, start=0, tol=tol, truncate=True)
        probes.append(probe)
        targets.append(prep.f[k])
        residuals.append(abs(probe.extrapolated - prep.f[k]))
    return residuals, trace_recovery_constant(prep.domain, probes, targets)


def extend_from_boundary(
    domain: PolygonalDomain,
    data: BoundaryData,
    depth: int,
    max_skirt_fraction: float = 0.5,
    probes: int = 50,
    seed: int = 0,
    consistency_tol: float = 1e-9,
    probe_tol: float = 1e-5,
    record_timings: bool = False,
) -> Tuple[ExtensionField, PipelineReport]:
    """Decompose, select gradients by LP, and extend the boundary values to a C2 field.

    Raises:
        InconsistentBoundaryDataError: If two cubes share an anchor with different values
        InfeasibleError: If the selection LP fails
    """
    timings = _Timings(record_timings)
    # --- Step 1: geometry and constraints ---
    prep = prepare(domain, data, depth, max_skirt_fraction=max_skirt_fraction, consistency_tol=consistency_tol,
                   timings=timings)
    # --- Step 2: minimum-seminorm selection ---
    with timings.stage("selection"):
        sel = lipschitz_selection(prep.graph, prep.constraints)
    # --- Step 3: jet and extension ---
    with timings.stage("extension"):
        g = g_from_selection(prep.graph, sel, prep.dec)
        jet = BoundaryJet(dict(prep.f), g)
        compat = check_jet_compat(jet, prep.dec, prep.table)
        jet.eta = compat.min_eta
        F = whitney_extend(prep.dec, prep.table, jet)
    # --- Step 4: measurements ---
    with timings.stage("measure"):
        seminorm = seminorm_estimate(F).value
        residuals, recovery = _probe_residuals(F, prep, probes, seed, probe_tol)
    lam = sel.seminorm
    report = PipelineReport(
        command="extend",
        depth=depth,
        cubes=len(prep.dec.cubes),
        nodes=prep.graph.size,
        edges=len(prep.graph.edges),
        eta_min=compat.min_eta,
        lambda_full=sel.lam,
        seminorm_out=seminorm,
        gamma_extension=seminorm / max(compat.min_eta, EPSILON),
        eta_over_lambda=compat.min_eta / lam if lam > EPSILON else None,
        g_over_lambda=compat.max_g_ratio / lam if lam > EPSILON else None,
        trace_residuals=residuals,
        trace_recovery_constant=recovery,
        seed=seed,
        timings=timings.values,
    )
    logger.info(
        f"Extension: lambda={sel.lam:.6g}, eta={compat.min_eta:.6g}, seminorm={seminorm:.6g}, "
        f"max trace residual={max(residuals, default=0.0):.3g}"
    )
    return F, report


# --- finiteness ---


@dataclass(frozen=True)
class SubsetResult:
    subset: Subset
    lam: Optional[float]
    elements: int


def _same_element(prep: Prepared, a: SplitElement, b: SplitElement) -> bool:
    if a.anchor.point != b.anchor.point:
        return False
    if a.sector_id == b.sector_id:
        return True
    key = (min(a.key, b.key), max(a.key, b.key))
    if key not in prep.equivalent:
        prep.equivalent[key] = element_equiv(prep.domain, a, b, prep.equiv_tol)
    return prep.equivalent[key]


def count_elements(prep: Prepared, cubes: Sequence[int]) -> int:
    """Boundary elements omega_Q of ``cubes``, counted up to equivalence."""
    kept: List[SplitElement] = []
    for c in cubes:
        omega = prep.table[c].omega_q
        if not any(_same_element(prep, seen, omega) for seen in kept):
            kept.append(omega)
    return len(kept)


def _evaluate_subset(prep: Prepared, subset: Subset) -> SubsetResult:
    elements = count_elements(prep, sorted({c for v in subset.nodes for c in prep.graph.pairs[v].cubes}))
    if any(prep.constraints[v].kind == "empty" for v in subset.nodes):
        return SubsetResult(subset, None, elements)
    return SubsetResult(subset, subset_lambda(prep.graph, prep.constraints, subset), elements)


def _subset_family(prep: Prepared, budget: int, seed: int) -> List[Subset]:
    family = list(finiteness_subsets(prep.graph, SUBSET_EDGES, budget, seed))
    covered = {v for s in family for v in s.nodes}
    incident = prep.graph.incident()
    for node, c in enumerate(prep.constraints):
        if c.kind != "empty" or node in covered:
            continue
        if incident[node]:
            e = incident[node][0]
            a, b, _ = prep.graph.edges[e]
            family.append(Subset((a, b), (e,)))
            covered.update((a, b))
        else:
            family.append(Subset((node,)))
            covered.add(node)
    return family


def _run_subsets(prep: Prepared, family: Sequence[Subset], workers: int) -> List[SubsetResult]:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda s: _evaluate_subset(prep, s), family))
    return [_evaluate_subset(prep, s) for s in family]


def _full_lambda(prep: Prepared) -> Optional[float]:
    if any(c.kind == "empty" for c in prep.constraints):
        return None
    return lipschitz_selection(prep.graph, prep.constraints).lam


def _summarize(
    report: PipelineReport, results: Sequence[SubsetResult], lam_full: Optional[float], lp_tol: float
) -> None:
    feasible = [r.lam for r in results if r.lam is not None]
    histogram: Dict[str, int] = {}
    for r in results:
        histogram[str(r.elements)] = histogram.get(str(r.elements), 0) + 1
    report.subsets = len(results)
    report.subset_lambdas = [r.lam for r in results]
    report.subset_histogram = dict(sorted(histogram.items()))
    report.max_elements = max((r.elements for r in results), default=0)
    if report.max_elements > MAX_ELEMENTS:
        logger.warning(f"A subset touches {report.max_elements} boundary elements (expected at most {MAX_ELEMENTS})")
    report.infeasible_subsets = [list(r.subset.nodes) for r in results if r.lam is None]
    report.lambda_subset_max = max(feasible, default=0.0)
    report.lambda_full = lam_full
    if lam_full is None:
        report.status = "infeasible"
        return
    report.monotone = all(lam <= lam_full + lp_tol * max(1.0, lam_full) for lam in feasible)
    report.gamma_hat = lam_full / max(report.lambda_subset_max, EPSILON)


def check_finiteness(
    domain: PolygonalDomain,
    data: Optional[BoundaryData],
    depth: int,
    budget: int = 200,
    seed: int = 0,
    workers: int = 1,
    values: Optional[Mapping[int, float]] = None,
    max_skirt_fraction: float = 0.5,
    consistency_tol: float = 1e-9,
    lp_tol: float = 1e-9,
    equiv_tol: float = 1e-4,
    record_timings: bool = False,
) -> PipelineReport:
    """Compare per-subset minimal Lipschitz constants with the full problem.

    Subsets are unions of at most 2^(n-1) pair-graph edges, so they touch at
    most 3 * 2^(n-1) boundary elements. Nodes with empty constraints always
    get a subset of their own so infeasibility is surfaced.
    """
    timings = _Timings(record_timings)
    prep = prepare(domain, data, depth, max_skirt_fraction=max_skirt_fraction, values=values,
                   consistency_tol=consistency_tol, strict=False, timings=timings, equiv_tol=equiv_tol)
    with timings.stage("full-lp"):
        lam_full = _full_lambda(prep)
    with timings.stage("subsets"):
        family = _subset_family(prep, budget, seed)
        results = _run_subsets(prep, family, workers)
    report = PipelineReport(
        command="check-fp",
        depth=depth,
        cubes=len(prep.dec.cubes),
        nodes=prep.graph.size,
        edges=len(prep.graph.edges),
        seed=seed,
        budget=budget,
    )
    _summarize(report, results, lam_full, lp_tol)
    report.timings = timings.values
    logger.info(
        f"Finiteness check: {report.subsets} subsets, lambda_full={report.lambda_full}, "
        f"max subset lambda={report.lambda_subset_max:.6g}, gamma_hat={report.gamma_hat}, status={report.status}"
    )
    return report


# --- visible triples ---


@dataclass(frozen=True)
class VisibleTriple:
    elements: Tuple[SplitElement, SplitElement, SplitElement]
    witness_cube: Cube
    alpha: float


@dataclass(frozen=True)
class VisibilityCheck:
    visible: bool
    failed: Optional[str] = None
    triple: Optional[VisibleTriple] = None


def _convex_hull(points: Sequence[Point]) -> List[Point]:
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts

    def half(seq):
        chain: List[Point] = []
        for p in seq:
            while len(chain) >= 2 and cross(sub(chain[-1], chain[-2]), sub(p, chain[-2])) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower, upper = half(pts), half(reversed(pts))
    return lower[:-1] + upper[:-1]


def _clip(hull: Sequence[Point], a: Point, b: Point) -> Optional[Tuple[Fraction, Fraction]]:
    """Parameter interval of segment ab inside the closed convex polygon ``hull``."""
    d = sub(b, a)
    t0, t1 = Fraction(0), Fraction(1)
    for i in range(len(hull)):
        v, w = hull[i], hull[(i + 1) % len(hull)]
        edge = sub(w, v)
        num = cross(edge, sub(a, v))
        den = cross(edge, d)
        if den == 0:
            if num < 0:
                return None
        elif den > 0:
            t0 = max(t0, -num / den)
        else:
            t1 = min(t1, -num / den)
        if t0 > t1:
            return None
    return t0, t1


def hull_clear(domain: PolygonalDomain, anchor: Point, cube: Cube) -> bool:
    """conv({anchor} u Q) minus the anchor lies in the domain."""
    if not contains(domain, cube.center):
        return False
    hull = _convex_hull([anchor, *cube.corners()])
    for f in domain.features:
        span = _clip(hull, f.a, f.b)
        if span is None:
            continue
        t0, t1 = span
        if t0 == t1 and add(f.a, scale(sub(f.b, f.a), t0)) == anchor:
            continue
        return False
    return True


def required_alpha(triple: Sequence[SplitElement], cube: Cube) -> float:
    """Smallest alpha with L in alpha Q and diam Q <= alpha diam L; inf for degenerate L."""
    points = [e.anchor.point for e in triple]
    spread = max(dist_inf(p, q) for p in points for q in points)
    if spread == 0:
        return math.inf
    reach = max(dist_inf(p, cube.center) for p in points) / cube.half_side
    return float(max(reach, cube.diam / spread, Fraction(1)))


def is_visible_triple(
    domain: PolygonalDomain, triple: Sequence[SplitElement], alpha: float, cube: Cube
) -> VisibilityCheck:
    """Check the three visibility conditions for ``triple`` seen from ``cube``."""
    if alpha < 1:
        raise ValueError(f"alpha must be at least 1, got {alpha}")
    for e in triple:
        if not hull_clear(domain, e.anchor.point, cube):
            return VisibilityCheck(False, "hull")
    for e in triple:
        if not e.contains_direction(sub(cube.center, e.anchor.point)):
            return VisibilityCheck(False, "ray")
    needed = required_alpha(triple, cube)
    if needed > alpha:
        return VisibilityCheck(False, "scale")
    return VisibilityCheck(True, None, VisibleTriple(tuple(triple), cube, needed))


def candidate_cubes(triple: Sequence[SplitElement], cubes: Sequence[Cube]) -> List[Cube]:
    """The given Whitney cubes plus cubes scaled to the spread of L, offset toward the middle cube."""
    points = [e.anchor.point for e in triple]
    candidates = list(cubes)
    spread = max(dist_inf(p, q) for p in points for q in points)
    lo = Point(min(p.x for p in points), min(p.y for p in points))
    hi = Point(max(p.x for p in points), max(p.y for p in points))
    middle = Point((lo.x + hi.x) / 2, (lo.y + hi.y) / 2)
    direction = sub(cubes[len(cubes) // 2].center, middle)
    if spread == 0 or norm_inf(direction) == 0:
        return candidates
    unit = scale(direction, 1 / norm_inf(direction))
    for j in range(-2, 4):
        half = spread / 2 * Fraction(2) ** j
        for offset in (2, 3, 4):
            candidates.append(Cube(add(middle, scale(unit, offset * half)), half))
    return candidates


def best_visibility(domain: PolygonalDomain, triple: Sequence[SplitElement], cubes: Sequence[Cube]) -> float:
    """Smallest alpha over candidate cubes seeing ``triple``; inf if none does."""
    ranked = sorted(candidate_cubes(triple, cubes), key=lambda c: required_alpha(triple, c))
    for cube in ranked:
        needed = required_alpha(triple, cube)
        if not math.isfinite(needed):
            return math.inf
        if is_visible_triple(domain, triple, needed, cube).visible:
            return needed
    return math.inf


def subset_triples(prep: Prepared, subset: Subset) -> List[Tuple[int, int, int]]:
    """Cube triples {Q1, K, Q2} of the edges generating ``subset``; K is shared."""
    triples = []
    for e in subset.edges:
        a, b, _ = prep.graph.edges[e]
        s, t = set(prep.graph.pairs[a].cubes), set(prep.graph.pairs[b].cubes)
        shared = (s & t).pop()
        q1, q2 = sorted((s | t) - {shared})
        triples.append((q1, shared, q2))
    return triples


def visible_subset_check(
    domain: PolygonalDomain,
    data: Optional[BoundaryData],
    depth: int,
    alpha: float = 8.0,
    budget: int = 200,
    seed: int = 0,
    workers: int = 1,
    values: Optional[Mapping[int, float]] = None,
    max_skirt_fraction: float = 0.5,
    consistency_tol: float = 1e-9,
    lp_tol: float = 1e-9,
    equiv_tol: float = 1e-4,
    record_timings: bool = False,
) -> PipelineReport:
    """Finiteness check on the refined decomposition restricted to visible triples.

    ``alpha_hat`` is the smallest alpha at which every non-degenerate triple
    met is visible; ``alpha_sweep`` counts fully visible subsets per alpha.
    """
    timings = _Timings(record_timings)
    prep = prepare(domain, data, depth, flavor="refined", max_skirt_fraction=max_skirt_fraction, values=values,
                   consistency_tol=consistency_tol, strict=False, timings=timings, equiv_tol=equiv_tol)
    with timings.stage("full-lp"):
        lam_full = _full_lambda(prep)
    with timings.stage("subsets"):
        family = _subset_family(prep, budget, seed)
        results = _run_subsets(prep, family, workers)
    with timings.stage("visibility"):
        cache: Dict[Tuple[int, int, int], float] = {}
        degenerate = 0
        subset_alpha = []
        for subset in family:
            worst = 1.0
            for triple in subset_triples(prep, subset):
                if triple not in cache:
                    elements = [prep.table[c].omega_q for c in triple]
                    if len({e.anchor.point for e in elements}) == 1:
                        cache[triple] = math.inf
                        degenerate += 1
                    else:
                        cache[triple] = best_visibility(domain, elements, [prep.dec.cubes[c] for c in triple])
                worst = max(worst, cache[triple])
            subset_alpha.append(worst)
    finite = [a for a in cache.values() if math.isfinite(a)]
    unseen = sum(1 for a in cache.values() if not math.isfinite(a)) - degenerate
    all_report = PipelineReport(command="check-fp", depth=depth)
    _summarize(all_report, results, lam_full, lp_tol)
    visible = [r for r, a in zip(results, subset_alpha) if a <= alpha]
    report = PipelineReport(
        command="check-fp",
        depth=depth,
        flavor="refined",
        cubes=len(prep.dec.cubes),
        nodes=prep.graph.size,
        edges=len(prep.graph.edges),
        seed=seed,
        budget=budget,
        alpha=float(alpha),
        alpha_hat=max(finite) if finite else None,
        alpha_sweep={str(a): sum(1 for s in subset_alpha if s <= a) for a in ALPHA_SWEEP},
        visible_subsets=len(visible),
        degenerate_triples=degenerate,
        unseen_triples=unseen,
        gamma_hat_all=all_report.gamma_hat,
    )
    _summarize(report, visible, lam_full, lp_tol)
    report.timings = timings.values
    logger.info(
        f"Visible-triple check: {len(visible)}/{len(family)} subsets visible at alpha={alpha}, "
        f"alpha_hat={report.alpha_hat}, {degenerate} degenerate triples"
    )
    return report


# --- measured constants ---


def metric_equivalence_ratio(
    domain: PolygonalDomain,
    dec: WhitneyDecomposition,
    graph: PairGraph,
    samples: int = 50,
    seed: int = 0,
) -> Tuple[float, float]:
    """min and max of rho_w(S, S~) / (diam Q + diam K + d(c_Q, c_K)) over sampled node pairs."""
    if graph.size < 2:
        return 1.0, 1.0
    rng = np.random.default_rng(seed)
    sources = sorted(set(int(s) for s in rng.choice(graph.size, size=min(samples, graph.size), replace=False)))
    rows = path_metric_rows(graph, sources)
    ratios = []
    for row, s in zip(rows, sources):
        t = int(rng.integers(graph.size))
        if t == s or not np.isfinite(row[t]):
            continue
        q, k = graph.pairs[s].q, graph.pairs[t].q
        cq, ck = dec.cubes[q], dec.cubes[k]
        denominator = float(cq.diam + ck.diam) + float(intrinsic_distance(domain, cq.center, ck.center))
        ratios.append(float(row[t]) / denominator)
    return (min(ratios), max(ratios)) if ratios else (1.0, 1.0)


def trace_continuity(
    domain: PolygonalDomain,
    data: BoundaryData,
    dec: WhitneyDecomposition,
    table: Mapping[int, CubeAnchor],
    limit: int = 100,
) -> float:
    """Measured A with |f(omega) - f(omega')| <= A d~(omega, omega') over neighboring cubes' elements."""
    worst = 0.0
    for i, j in intersecting_pairs(dec)[:limit]:
        wi, wj = table[i].omega_q, table[j].omega_q
        if wi.same_approach(wj):
            continue
        d = completed_distance(domain, wi, wj)
        if d > 0:
            worst = max(worst, abs(data.value(wi) - data.value(wj)) / d)
    return worst
