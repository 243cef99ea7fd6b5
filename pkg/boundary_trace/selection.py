"""Pair graph, affine constraints and minimum-seminorm Lipschitz selections.

Everything here is dimension-generic: vectors live in R^n for any n >= 1.
The geometric modules feed it n = 2.
"""
import itertools
import logging
from dataclasses import dataclass, field
from math import comb
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.sparse import csgraph

from boundary_trace.errors import (
    DomainFileError,
    EmptyConstraintError,
    InconsistentBoundaryDataError,
    InfeasibleError,
    NonConvergenceError,
)
from boundary_trace.whitney import CubeAnchor, WhitneyDecomposition, intersecting_pairs

logger = logging.getLogger(__name__)

HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
L1_SLACK = 1e-9


@dataclass(frozen=True)
class PairNode:
    """Two distinct intersecting cubes, q < k, and D(S) = diam Q + diam K."""

    q: int
    k: int
    length: float

    @property
    def cubes(self) -> Tuple[int, int]:
        return self.q, self.k


@dataclass(frozen=True)
class PairGraph:
    """Weighted undirected graph; ``pairs`` is empty for graphs read from files."""

    size: int
    edges: Tuple[Tuple[int, int, float], ...]
    pairs: Tuple[PairNode, ...] = ()

    def matrix(self) -> sparse.csr_matrix:
        if not self.edges:
            return sparse.csr_matrix((self.size, self.size))
        a, b, w = zip(*self.edges)
        return sparse.coo_matrix((w, (a, b)), shape=(self.size, self.size)).tocsr()

    def incident(self) -> List[List[int]]:
        """Edge indices touching each node."""
        result: List[List[int]] = [[] for _ in range(self.size)]
        for e, (a, b, _) in enumerate(self.edges):
            result[a].append(e)
            result[b].append(e)
        return result

    def node_index(self) -> Dict[Tuple[int, int], int]:
        return {p.cubes: i for i, p in enumerate(self.pairs)}


def build_pair_graph(dec: WhitneyDecomposition) -> PairGraph:
    """Nodes are intersecting cube pairs; edges join pairs sharing a cube."""
    pairs = tuple(
        PairNode(i, j, float(dec.cubes[i].diam + dec.cubes[j].diam)) for i, j in intersecting_pairs(dec)
    )
    by_cube: Dict[int, List[int]] = {}
    for n, p in enumerate(pairs):
        by_cube.setdefault(p.q, []).append(n)
        by_cube.setdefault(p.k, []).append(n)
    edges = set()
    for members in by_cube.values():
        for a, b in itertools.combinations(members, 2):
            edges.add((a, b, pairs[a].length + pairs[b].length))
    graph = PairGraph(len(pairs), tuple(sorted(edges)), pairs)
    logger.info(f"Pair graph: {graph.size} nodes, {len(graph.edges)} edges")
    return graph


def path_metric(graph: PairGraph, s: int, t: int) -> float:
    """Weighted shortest-path distance; inf for disconnected nodes."""
    if s == t:
        return 0.0
    dist = csgraph.dijkstra(graph.matrix(), directed=False, indices=s)
    return float(dist[t])


def path_metric_rows(graph: PairGraph, sources: Sequence[int]) -> np.ndarray:
    return csgraph.dijkstra(graph.matrix(), directed=False, indices=list(sources))


# --- constraints ---


@dataclass(frozen=True)
class AffineConstraint:
    """{u : <h, u> = b}, the whole space, or the empty set."""

    kind: str
    normal: Tuple[float, ...] = ()
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("hyperplane", "full", "empty"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "hyperplane" and not any(self.normal):
            raise ValueError("hyperplane needs a nonzero normal")

    @classmethod
    def hyperplane(cls, normal: Sequence[float], offset: float) -> "AffineConstraint":
        return cls("hyperplane", tuple(float(v) for v in normal), float(offset))

    def residual(self, z: Sequence[float]) -> float:
        if self.kind != "hyperplane":
            return 0.0 if self.kind == "full" else float("inf")
        return abs(float(np.dot(self.normal, z)) - self.offset)

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == "hyperplane":
            return {"kind": "hyperplane", "h": list(self.normal), "b": self.offset}
        return {"kind": self.kind}


def hyperplanes_from_data(
    graph: PairGraph,
    anchors: Mapping[int, CubeAnchor],
    f: Mapping[int, float],
    tol: float = 1e-9,
    strict: bool = True,
) -> List[AffineConstraint]:
    """Y_S = {y : <y, a_Q - a_Q'> = f(omega_Q) - f(omega_Q')} per node.

    Raises:
        InconsistentBoundaryDataError: When ``strict`` and some node has a_Q = a_Q'
            with differing values (the error lists those nodes)
    """
    constraints = []
    empty = []
    for n, p in enumerate(graph.pairs):
        aq, ak = anchors[p.q].a_q.point, anchors[p.k].a_q.point
        b = f[p.q] - f[p.k]
        if aq == ak:
            if abs(b) <= tol:
                constraints.append(AffineConstraint("full"))
            else:
                constraints.append(AffineConstraint("empty"))
                empty.append(n)
            continue
        constraints.append(AffineConstraint.hyperplane((float(aq.x - ak.x), float(aq.y - ak.y)), b))
    if empty:
        logger.warning(f"{len(empty)} pair nodes carry inconsistent boundary data")
        if strict:
            raise InconsistentBoundaryDataError(
                f"inconsistent boundary data at nodes {empty[:10]}{'...' if len(empty) > 10 else ''}", empty
            )
    return constraints


def project_to_affine(z: Sequence[float], c: AffineConstraint) -> np.ndarray:
    """Euclidean projection; points already on the hyperplane are returned unchanged."""
    z = np.asarray(z, dtype=float)
    if c.kind == "empty":
        raise EmptyConstraintError("cannot project onto an empty constraint")
    if c.kind == "full":
        return z.copy()
    h = np.asarray(c.normal)
    gap = c.offset - float(h @ z)
    scale = abs(c.offset) + float(np.abs(h * z).sum())
    if abs(gap) <= 64 * np.finfo(float).eps * scale:
        return z.copy()
    return z + gap / float(h @ h) * h


# --- the LP ---


@dataclass(frozen=True)
class Selection:
    values: np.ndarray
    seminorm: float
    lam: float
    pinned: Tuple[int, ...] = ()
    components: int = 1

    def __getitem__(self, node: int) -> np.ndarray:
        return self.values[node]


def selection_seminorm(graph: PairGraph, sel: Any) -> float:
    """max over edges of ||G(S) - G(S~)||_inf / w."""
    values = sel.values if isinstance(sel, Selection) else np.asarray(sel)
    worst = 0.0
    for a, b, w in graph.edges:
        worst = max(worst, float(np.max(np.abs(values[a] - values[b]))) / w)
    return worst


def _dimension(constraints: Sequence[AffineConstraint], default: int) -> int:
    for c in constraints:
        if c.kind == "hyperplane":
            return len(c.normal)
    return default


def _solve(c, a_ub, b_ub, a_eq, b_eq, bounds, what: str):
    res = linprog(
        c,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options=HIGHS_OPTIONS,
    )
    if res.status == 2:
        raise InfeasibleError(f"{what}: LP infeasible ({res.message})")
    if res.status != 0:
        raise NonConvergenceError(f"{what}: LP solver status {res.status} ({res.message})")
    return res


def _component_lp(
    nodes: Sequence[int],
    edges: Sequence[Tuple[int, int, float]],
    constraints: Sequence[AffineConstraint],
    n: int,
    lam_fixed: Optional[float],
) -> Tuple[np.ndarray, float]:
    """Min-lambda then min-L1 LP on one connected component.

    Variables: u (len(nodes) * n), lam, t (len(nodes) * n) with |u| <= t.
    """
    local = {node: i for i, node in enumerate(nodes)}
    m = len(nodes) * n
    lam_col = m
    total = 2 * m + 1
    rows, cols, vals = [], [], []
    row = 0
    for a, b, w in edges:
        ia, ib = local[a], local[b]
        for i in range(n):
            for sign in (1.0, -1.0):
                rows += [row, row, row]
                cols += [ia * n + i, ib * n + i, lam_col]
                vals += [sign, -sign, -w]
                row += 1
    for k in range(m):
        for sign in (1.0, -1.0):
            rows += [row, row]
            cols += [k, m + 1 + k]
            vals += [sign, -1.0]
            row += 1
    a_ub = sparse.csr_matrix((vals, (rows, cols)), shape=(row, total))
    b_ub = np.zeros(row)
    eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []
    for node in nodes:
        c = constraints[node]
        if c.kind != "hyperplane":
            continue
        for i, h in enumerate(c.normal):
            if h:
                eq_rows.append(len(b_eq))
                eq_cols.append(local[node] * n + i)
                eq_vals.append(h)
        b_eq.append(c.offset)
    a_eq = sparse.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), total)) if b_eq else None
    b_eq = np.array(b_eq) if b_eq else None
    free = [(None, None)] * m
    slack = [(0, None)] * m

    if lam_fixed is None:
        # --- Step 1: minimal lambda ---
        cost = np.zeros(total)
        cost[lam_col] = 1.0
        res = _solve(cost, a_ub, b_ub, a_eq, b_eq, free + [(0, None)] + slack, "min-seminorm")
        lam = max(float(res.x[lam_col]), 0.0)
        cap = lam * (1.0 + L1_SLACK) + 1e-12
    else:
        lam = cap = float(lam_fixed)
    # --- Step 2: smallest L1 norm among (near) optimal selections ---
    cost = np.zeros(total)
    cost[m + 1:] = 1.0
    lam_bounds = (lam, lam) if lam_fixed is not None else (0, cap)
    try:
        res = _solve(cost, a_ub, b_ub, a_eq, b_eq, free + [lam_bounds] + slack, "min-L1")
    except NonConvergenceError:
        if lam_fixed is not None:
            raise
        logger.warning("L1 canonicalisation failed; falling back to the min-lambda vertex")
        return _component_lp(nodes, edges, constraints, n, cap)
    values = np.asarray(res.x[:m]).reshape(len(nodes), n)
    return values, lam


def lipschitz_selection(
    graph: PairGraph,
    constraints: Sequence[AffineConstraint],
    mode: str = "min",
    lam: Optional[float] = None,
    dimension: int = 2,
) -> Selection:
    """Minimum-seminorm (or fixed-lambda) selection G(S) in Y_S.

    Args:
        graph: Pair graph or any weighted graph
        constraints: One constraint per node
        mode: "min" to minimise lambda, "feas" to test feasibility at ``lam``
        lam: Fixed Lipschitz bound for "feas"
        dimension: n for graphs without hyperplanes

    Raises:
        InfeasibleError: On empty constraints or infeasibility at fixed lambda
    """
    if mode not in ("min", "feas"):
        raise ValueError(f"mode must be 'min' or 'feas', got {mode!r}")
    if mode == "feas" and (lam is None or lam < 0):
        raise ValueError("feasibility mode needs a nonnegative lambda")
    if len(constraints) != graph.size:
        raise ValueError(f"expected {graph.size} constraints, got {len(constraints)}")
    empty = [i for i, c in enumerate(constraints) if c.kind == "empty"]
    if empty:
        raise InfeasibleError(f"empty constraints at nodes {empty[:10]}")
    n = _dimension(constraints, dimension)
    values = np.zeros((graph.size, n))
    if not graph.size:
        return Selection(values, 0.0, float(lam or 0.0), (), 0)
    count, labels = csgraph.connected_components(graph.matrix(), directed=False)
    members: Dict[int, List[int]] = {}
    for node, label in enumerate(labels):
        members.setdefault(int(label), []).append(node)
    comp_edges: Dict[int, List[Tuple[int, int, float]]] = {}
    for edge in graph.edges:
        comp_edges.setdefault(int(labels[edge[0]]), []).append(edge)
    pinned: List[int] = []
    best = 0.0
    for label in sorted(members):
        nodes = members[label]
        edges = comp_edges.get(label, [])
        if all(constraints[v].kind == "full" for v in nodes):
            pinned.extend(nodes)
            continue
        if not edges:
            values[nodes[0]] = project_to_affine(np.zeros(n), constraints[nodes[0]])
            continue
        logger.debug(f"Component {label}: {len(nodes)} nodes, {len(edges)} edges")
        sub, lam_c = _component_lp(nodes, edges, constraints, n, lam if mode == "feas" else None)
        values[nodes] = sub
        best = max(best, lam_c)
    for node in range(graph.size):
        values[node] = project_to_affine(values[node], constraints[node])
    seminorm = selection_seminorm(graph, values)
    lam_out = float(lam) if mode == "feas" else best
    logger.info(f"Selection over {graph.size} nodes in {count} components: lambda={lam_out:.6g}")
    return Selection(values, seminorm, lam_out, tuple(pinned), int(count))


# --- subgraphs and finiteness subsets ---


@dataclass(frozen=True)
class Subset:
    """Nodes of a union of at most m edges, with the edges that generated it."""

    nodes: Tuple[int, ...]
    edges: Tuple[int, ...] = field(default=(), compare=False)


def finiteness_subsets(graph: PairGraph, m: int, budget: int, seed: int = 0) -> Iterator[Subset]:
    """Unions of at most ``m`` edges' endpoint pairs.

    Exhaustive (in lexicographic edge order) when there are at most ``budget``
    edge combinations, otherwise ``budget`` distinct subsets drawn with a
    seeded generator.
    """
    if m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    count = len(graph.edges)
    total = sum(comb(count, k) for k in range(1, m + 1))
    seen = set()

    def subset_of(chosen: Sequence[int]) -> Subset:
        nodes = sorted({v for e in chosen for v in graph.edges[e][:2]})
        return Subset(tuple(nodes), tuple(sorted(chosen)))

    if total <= budget:
        for k in range(1, m + 1):
            for chosen in itertools.combinations(range(count), k):
                s = subset_of(chosen)
                if s.nodes not in seen:
                    seen.add(s.nodes)
                    yield s
        return
    rng = np.random.default_rng(seed)
    attempts = 0
    while len(seen) < budget and attempts < 50 * budget:
        attempts += 1
        chosen = sorted(set(int(e) for e in rng.choice(count, size=m, replace=True)))
        s = subset_of(chosen)
        if s.nodes not in seen:
            seen.add(s.nodes)
            yield s


def induced_subgraph(graph: PairGraph, nodes: Sequence[int]) -> PairGraph:
    local = {v: i for i, v in enumerate(nodes)}
    edges = tuple((local[a], local[b], w) for a, b, w in graph.edges if a in local and b in local)
    pairs = tuple(graph.pairs[v] for v in nodes) if graph.pairs else ()
    return PairGraph(len(nodes), edges, pairs)


def metric_subgraph(graph: PairGraph, nodes: Sequence[int], rows: Optional[np.ndarray] = None) -> PairGraph:
    """Complete graph on ``nodes`` weighted by the path metric of ``graph``."""
    if rows is None:
        rows = path_metric_rows(graph, nodes)
    edges = []
    for i, j in itertools.combinations(range(len(nodes)), 2):
        d = float(rows[i][nodes[j]])
        if np.isfinite(d):
            edges.append((i, j, d))
    return PairGraph(len(nodes), tuple(edges))


def subset_lambda(
    graph: PairGraph, constraints: Sequence[AffineConstraint], subset: Subset, dimension: int = 2
) -> float:
    """Smallest Lipschitz constant (in the path metric) of selections on ``subset``."""
    sub = metric_subgraph(graph, subset.nodes)
    return lipschitz_selection(sub, [constraints[v] for v in subset.nodes], dimension=dimension).lam


# --- graph files ---


def graph_from_dict(data: Mapping[str, Any]) -> Tuple[PairGraph, List[AffineConstraint], int]:
    """Parse {"n", "nodes": [{"id", "constraint"}], "edges": [{"a", "b", "w"}]}."""
    try:
        n = int(data.get("n", 2))
        nodes = sorted(data["nodes"], key=lambda item: int(item["id"]))
        ids = [int(item["id"]) for item in nodes]
        if ids != list(range(len(ids))):
            raise ValueError("node ids must be 0..N-1")
        constraints = []
        for item in nodes:
            raw = item.get("constraint", {"kind": "full"})
            if raw["kind"] == "hyperplane":
                if len(raw["h"]) != n:
                    raise ValueError(f"node {item['id']}: normal has {len(raw['h'])} entries, expected {n}")
                constraints.append(AffineConstraint.hyperplane(raw["h"], raw["b"]))
            else:
                constraints.append(AffineConstraint(raw["kind"]))
        edges: Dict[Tuple[int, int], float] = {}
        for item in data.get("edges", []):
            a, b, w = int(item["a"]), int(item["b"]), float(item["w"])
            if a == b or not w > 0 or not np.isfinite(w):
                raise ValueError(f"bad edge {a}-{b} with weight {w}")
            if not (0 <= a < len(ids) and 0 <= b < len(ids)):
                raise ValueError(f"edge {a}-{b} names an unknown node")
            pair = (min(a, b), max(a, b))
            if pair in edges:
                raise ValueError(f"duplicate edge {pair[0]}-{pair[1]}")
            edges[pair] = w
    except (KeyError, TypeError, ValueError) as e:
        raise DomainFileError(f"malformed graph document: {e}") from e
    return PairGraph(len(constraints), tuple(sorted((a, b, w) for (a, b), w in edges.items()))), constraints, n
