"""Intrinsic (geodesic) metric of a polygonal domain and its split boundary.

Shortest paths run over a visibility graph whose nodes are boundary
vertices split by approach sector, so a path may turn around a vertex but
never pass through a slit. Split-boundary elements are enumerated by exact
sector analysis at a boundary point; limits along witness rays are only
used for completed distances.
"""
import heapq
import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cmp_to_key, lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from boundary_trace.domain_file import format_exact
from boundary_trace.errors import NonConvergenceError, NotBoundaryPointError, OutsideDomainError
from boundary_trace.geometry import (
    BoundarySample,
    Point,
    PointLike,
    PolygonalDomain,
    _segment_linf,
    add,
    as_point,
    boundary_sample,
    contains,
    cross,
    dist_inf,
    distance_to_features,
    dot,
    lerp,
    norm_inf,
    on_segment,
    scale,
    segment_visible,
    sub,
)

logger = logging.getLogger(__name__)

WITNESS_DISTANCE = Fraction(1, 100)
BISECTOR_GRID = 2**20
EAST = Point(Fraction(1), Fraction(0))


# --- directions and sectors ---


def _half(u: Point, d: Point) -> int:
    c = cross(u, d)
    return 0 if c > 0 or (c == 0 and dot(u, d) > 0) else 1


def _ccw_less(u: Point, d1: Point, d2: Point) -> bool:
    """True when the counterclockwise angle from u to d1 is smaller than to d2."""
    h1, h2 = _half(u, d1), _half(u, d2)
    if h1 != h2:
        return h1 < h2
    return cross(d1, d2) > 0


def _unit(d: Point) -> Point:
    return scale(d, 1 / norm_inf(d))


def _angle(d: Point) -> float:
    return math.atan2(float(d.y), float(d.x)) % (2 * math.pi)


@dataclass(frozen=True)
class Sector:
    """Half-open counterclockwise angular sector [start, end) at a boundary point."""

    start: Point
    end: Point
    interior: Point
    in_domain: bool
    full: bool
    theta0: float
    theta1: float

    def contains_direction(self, d: Point) -> bool:
        if self.full:
            return True
        if cross(self.start, d) == 0 and dot(self.start, d) > 0:
            return True
        return _ccw_less(self.start, d, self.end)


def _incident_directions(domain: PolygonalDomain, p: Point) -> List[Point]:
    found: Dict[Point, None] = {}
    for f in domain.features:
        if not on_segment(p, f.a, f.b):
            continue
        if p != f.a:
            found.setdefault(_unit(sub(f.a, p)), None)
        if p != f.b:
            found.setdefault(_unit(sub(f.b, p)), None)
    return sorted(found, key=cmp_to_key(lambda a, b: -1 if _ccw_less(EAST, a, b) else (1 if _ccw_less(EAST, b, a) else 0)))


def _clearance(domain: PolygonalDomain, p: Point) -> Fraction:
    others = [_segment_linf(p, f.a, f.b)[0] for f in domain.features if not on_segment(p, f.a, f.b)]
    return min(others) if others else Fraction(1)


def witness_step(domain: PolygonalDomain, p: Point) -> Fraction:
    """min(0.01, clearance / 2): the uniform-norm distance from p to its witnesses."""
    return min(WITNESS_DISTANCE, _clearance(domain, p) / 2)


def _bisector(u: Point, v: Point) -> Point:
    """Euclidean bisector of directions u and v, snapped to a dyadic grid."""
    ux, uy, vx, vy = float(u.x), float(u.y), float(v.x), float(v.y)
    nu, nv = math.hypot(ux, uy), math.hypot(vx, vy)
    bx, by = ux / nu + vx / nv, uy / nu + vy / nv
    return Point(
        Fraction(round(bx * BISECTOR_GRID), BISECTOR_GRID), Fraction(round(by * BISECTOR_GRID), BISECTOR_GRID)
    )


def sectors_at(domain: PolygonalDomain, p: PointLike) -> List[Sector]:
    """All angular sectors at a boundary point, in counterclockwise order.

    Raises:
        NotBoundaryPointError: If no boundary feature passes through ``p``
    """
    p = as_point(p)
    directions = _incident_directions(domain, p)
    if not directions:
        raise NotBoundaryPointError(f"point ({p.x}, {p.y}) is not on the boundary")
    step = witness_step(domain, p)
    sectors = []
    k = len(directions)
    for i, u in enumerate(directions):
        v = directions[(i + 1) % k]
        if k == 1:
            interior = Point(-u.x, -u.y)
        else:
            c = cross(u, v)
            if c > 0:
                interior = _bisector(u, v)
            elif c == 0:
                interior = Point(-u.y, u.x)
            else:
                b = _bisector(u, v)
                interior = Point(-b.x, -b.y)
        inside = add(p, scale(interior, step / norm_inf(interior)))
        theta0 = _angle(u)
        span = 2 * math.pi if k == 1 else (_angle(v) - theta0) % (2 * math.pi)
        sectors.append(Sector(u, v, interior, contains(domain, inside), k == 1, theta0, theta0 + span))
    return sectors


def _locate(sectors: Sequence[Sector], d: Point) -> int:
    for i, sector in enumerate(sectors):
        if sector.contains_direction(d):
            return i
    raise ValueError("direction not covered by any sector")


# --- split elements ---


@dataclass(frozen=True)
class SplitElement:
    """An approach to a boundary point: anchor, witness ray and sector."""

    anchor: BoundarySample
    witness: Point
    sector_id: int
    start: Point
    end: Point
    full: bool
    theta0: float
    theta1: float

    @property
    def sector(self) -> Tuple[float, float]:
        return self.theta0, self.theta1

    @property
    def key(self) -> str:
        p = self.anchor.point
        return f"{format_exact(p.x)},{format_exact(p.y)},{self.sector_id}"

    def contains_direction(self, d: Point) -> bool:
        return Sector(self.start, self.end, self.start, True, self.full, self.theta0, self.theta1).contains_direction(d)

    def same_approach(self, other: "SplitElement") -> bool:
        return self.anchor.point == other.anchor.point and self.sector_id == other.sector_id

    def with_witness(self, witness: Point) -> "SplitElement":
        return replace(self, witness=witness)

    def ray_point(self, t: Fraction) -> Point:
        return lerp(self.anchor.point, self.witness, t)


def _as_sample(domain: PolygonalDomain, b: Union[BoundarySample, PointLike]) -> BoundarySample:
    if isinstance(b, BoundarySample):
        return b
    return boundary_sample(domain, b)


def split_elements_at(domain: PolygonalDomain, b: Union[BoundarySample, PointLike]) -> List[SplitElement]:
    """One element per sector at ``b`` that contains domain points near ``b``."""
    sample = _as_sample(domain, b)
    step = witness_step(domain, sample.point)
    elements = []
    for sector in sectors_at(domain, sample.point):
        if not sector.in_domain:
            continue
        witness = add(sample.point, scale(sector.interior, step / norm_inf(sector.interior)))
        elements.append(
            SplitElement(
                sample, witness, len(elements), sector.start, sector.end, sector.full, sector.theta0, sector.theta1
            )
        )
    return elements


def element_for_direction(
    domain: PolygonalDomain, b: Union[BoundarySample, PointLike], direction: Point
) -> SplitElement:
    """The split element at ``b`` whose sector holds ``direction``."""
    for element in split_elements_at(domain, b):
        if element.contains_direction(direction):
            return element
    sample = _as_sample(domain, b)
    raise OutsideDomainError(
        f"direction ({direction.x}, {direction.y}) at ({sample.point.x}, {sample.point.y}) leaves the domain"
    )


# --- visibility graph ---


def _sub_edges(domain: PolygonalDomain) -> List[Tuple[Point, Point]]:
    """Pairs of consecutive boundary vertices along each feature."""
    pairs = []
    for f in domain.features:
        direction = sub(f.b, f.a)
        length = dot(direction, direction)
        on = sorted((dot(sub(v, f.a), direction) / length, v) for v in domain.vertices if on_segment(v, f.a, f.b))
        pairs.extend((p, q) for (_, p), (_, q) in zip(on, on[1:]))
    return pairs


class VisibilityGraph:
    """Sector-split visibility graph of one domain; read-only after construction."""

    def __init__(self, domain: PolygonalDomain):
        self.domain = domain
        self.sectors: Dict[Point, List[Sector]] = {v: sectors_at(domain, v) for v in domain.vertices}
        self.nodes: List[Tuple[Point, int]] = []
        self.node_id: Dict[Tuple[Point, int], int] = {}
        for v in domain.vertices:
            for k, sector in enumerate(self.sectors[v]):
                if sector.in_domain:
                    self.node_id[(v, k)] = len(self.nodes)
                    self.nodes.append((v, k))
        self.adjacency: List[List[Tuple[int, Fraction]]] = [[] for _ in self.nodes]
        self._build()

    def _add_edge(self, a: Optional[int], b: Optional[int], weight: Fraction) -> None:
        if a is None or b is None:
            return
        self.adjacency[a].append((b, weight))
        self.adjacency[b].append((a, weight))

    def node_for(self, v: Point, direction: Point) -> Optional[int]:
        return self.node_id.get((v, _locate(self.sectors[v], direction)))

    def _build(self) -> None:
        vertices = self.domain.vertices
        for i, v in enumerate(vertices):
            for w in vertices[i + 1:]:
                if segment_visible(self.domain, v, w):
                    self._add_edge(self.node_for(v, sub(w, v)), self.node_for(w, sub(v, w)), dist_inf(v, w))
        # segments along a boundary edge, one per side where the domain lies
        for v, w in _sub_edges(self.domain):
            sv, sw = self.sectors[v], self.sectors[w]
            iv, iw = _locate(sv, sub(w, v)), _locate(sw, sub(v, w))
            weight = dist_inf(v, w)
            for kv, kw in ((iv, (iw - 1) % len(sw)), ((iv - 1) % len(sv), iw)):
                self._add_edge(self.node_id.get((v, kv)), self.node_id.get((w, kw)), weight)
        edge_count = sum(len(a) for a in self.adjacency) // 2
        logger.debug(f"Visibility graph: {len(self.nodes)} nodes, {edge_count} edges")

    def links_from_interior(self, x: Point) -> Dict[int, Fraction]:
        links: Dict[int, Fraction] = {}
        for v in self.domain.vertices:
            if segment_visible(self.domain, x, v):
                node = self.node_for(v, sub(x, v))
                if node is not None:
                    links[node] = dist_inf(x, v)
        return links

    def links_to_boundary(self, b: Point) -> Dict[int, Fraction]:
        if b in self.sectors:
            return {nid: Fraction(0) for (v, _), nid in self.node_id.items() if v == b}
        links = self.links_from_interior(b)
        for f in self.domain.features:
            if not on_segment(b, f.a, f.b):
                continue
            on_line = [v for v in self.domain.vertices if on_segment(v, f.a, f.b)]
            direction = sub(f.b, f.a)
            before = [v for v in on_line if dot(sub(v, b), direction) < 0]
            after = [v for v in on_line if dot(sub(v, b), direction) > 0]
            nearest = []
            if before:
                nearest.append(max(before, key=lambda v: dot(sub(v, b), direction)))
            if after:
                nearest.append(min(after, key=lambda v: dot(sub(v, b), direction)))
            for v in nearest:
                sectors = self.sectors[v]
                i = _locate(sectors, sub(b, v))
                for k in (i, (i - 1) % len(sectors)):
                    nid = self.node_id.get((v, k))
                    if nid is not None:
                        links[nid] = min(links.get(nid, dist_inf(v, b)), dist_inf(v, b))
        return links

    def dijkstra(self, sources: Dict[int, Fraction]) -> Tuple[List[Optional[Fraction]], List[int]]:
        dist: List[Optional[Fraction]] = [None] * len(self.nodes)
        prev = [-1] * len(self.nodes)
        heap = [(d, n, -1) for n, d in sources.items()]
        heapq.heapify(heap)
        while heap:
            d, n, p = heapq.heappop(heap)
            if dist[n] is not None:
                continue
            dist[n], prev[n] = d, p
            for m, w in self.adjacency[n]:
                if dist[m] is None:
                    heapq.heappush(heap, (d + w, m, n))
        return dist, prev

    def shortest(
        self, x: Point, target: Point, target_links: Dict[int, Fraction]
    ) -> Tuple[Optional[Fraction], List[Point]]:
        """Shortest path from an interior point to a target given its links."""
        if segment_visible(self.domain, x, target) or x == target:
            return dist_inf(x, target), [x, target] if x != target else [x]
        dist, prev = self.dijkstra(self.links_from_interior(x))
        best: Optional[Fraction] = None
        best_node = -1
        for node, w in sorted(target_links.items()):
            if dist[node] is None:
                continue
            candidate = dist[node] + w
            if best is None or candidate < best:
                best, best_node = candidate, node
        if best is None:
            return None, []
        chain = []
        node = best_node
        while node != -1:
            chain.append(self.nodes[node][0])
            node = prev[node]
        vertices = [x] + list(reversed(chain))
        if vertices[-1] != target:
            vertices.append(target)
        return best, vertices


@lru_cache(maxsize=32)
def visibility_graph(domain: PolygonalDomain) -> VisibilityGraph:
    """Memoized visibility graph; built once per domain."""
    return VisibilityGraph(domain)


# --- geodesics ---


@dataclass(frozen=True)
class GeodesicPath:
    vertices: Tuple[Point, ...]
    length: Fraction


def _check_inside(domain: PolygonalDomain, *points: Point) -> None:
    for p in points:
        if not contains(domain, p):
            raise OutsideDomainError(f"point ({p.x}, {p.y}) is outside the domain")


def _interior_distance(domain: PolygonalDomain, x: Point, y: Point) -> Union[Fraction, float]:
    if x == y:
        return Fraction(0)
    if segment_visible(domain, x, y):
        return dist_inf(x, y)
    graph = visibility_graph(domain)
    length, _ = graph.shortest(x, y, graph.links_from_interior(y))
    return math.inf if length is None else length


def intrinsic_distance(domain: PolygonalDomain, x: PointLike, y: PointLike) -> Union[Fraction, float]:
    """Geodesic distance in the uniform norm; ``math.inf`` if unreachable."""
    x, y = as_point(x), as_point(y)
    _check_inside(domain, x, y)
    return _interior_distance(domain, x, y)


def geodesic_path(domain: PolygonalDomain, x: PointLike, y: PointLike) -> GeodesicPath:
    x, y = as_point(x), as_point(y)
    _check_inside(domain, x, y)
    if x == y:
        return GeodesicPath((x,), Fraction(0))
    graph = visibility_graph(domain)
    length, vertices = graph.shortest(x, y, graph.links_from_interior(y))
    if length is None:
        raise NonConvergenceError(f"no path between ({x.x}, {x.y}) and ({y.x}, {y.y})")
    return GeodesicPath(tuple(vertices), length)


def distance_to_boundary_point(domain: PolygonalDomain, x: PointLike, b: PointLike) -> Union[Fraction, float]:
    """Length of the shortest path from an interior point to a boundary point."""
    x, b = as_point(x), as_point(b)
    _check_inside(domain, x)
    graph = visibility_graph(domain)
    length, _ = graph.shortest(x, b, graph.links_to_boundary(b))
    return math.inf if length is None else length


# --- completed metric ---


def completed_distance(
    domain: PolygonalDomain,
    omega: SplitElement,
    other: SplitElement,
    tol: float = 1e-6,
    start: int = 4,
    max_steps: int = 48,
    bound: Optional[float] = None,
) -> float:
    """Limit of d(x_i, y_i) along the two witness rays, x_i at parameter 2^-i.

    The result never exceeds min_i d_i + 2^-i (||w - l|| + ||w' - l'||).

    Raises:
        NonConvergenceError: On unreachable points, values above ``bound``,
            or when successive values never settle
    """
    if omega.same_approach(other) and omega.witness == other.witness:
        return 0.0
    correction = float(dist_inf(omega.witness, omega.anchor.point) + dist_inf(other.witness, other.anchor.point))
    previous: Optional[float] = None
    best = math.inf
    for i in range(start, max_steps + 1):
        t = Fraction(1, 2**i)
        d = float(_interior_distance(domain, omega.ray_point(t), other.ray_point(t)))
        if not math.isfinite(d) or (bound is not None and d > bound):
            raise NonConvergenceError(f"completed distance diverged at step {i} (value {d})")
        best = min(best, d + float(t) * correction)
        if previous is not None and abs(d - previous) < tol:
            return max(0.0, min(d, best))
        previous = d
    raise NonConvergenceError(f"completed distance did not settle within {max_steps} steps")


def element_equiv(domain: PolygonalDomain, omega: SplitElement, other: SplitElement, tol: float = 1e-4) -> bool:
    if omega.anchor.point != other.anchor.point:
        return False
    return completed_distance(domain, omega, other) < tol


# --- accessibility ---


@dataclass(frozen=True)
class AccessReport:
    sample: BoundarySample
    status: str
    bound_used: float
    distance: float


def interior_probe(domain: PolygonalDomain, levels: int = 4) -> Point:
    """Dyadic grid-cell center with the largest boundary distance."""
    lo, hi = domain.bbox
    side = max(hi.x - lo.x, hi.y - lo.y)
    best: Optional[Tuple[Fraction, Point]] = None
    for level in range(levels + 1):
        cells = 2**level
        step = side / cells
        for i in range(cells):
            for j in range(cells):
                c = Point(lo.x + (i + Fraction(1, 2)) * step, lo.y + (j + Fraction(1, 2)) * step)
                if not contains(domain, c):
                    continue
                d = distance_to_features(domain, c)
                if best is None or d > best[0] or (d == best[0] and c < best[1]):
                    best = (d, c)
        if best is not None and level >= 1:
            break
    if best is None:
        raise OutsideDomainError("no interior probe found on the dyadic grid")
    return best[1]


def accessibility_scan(
    domain: PolygonalDomain,
    samples: Iterable[BoundarySample],
    bound: float,
    probes: Optional[Sequence[PointLike]] = None,
) -> List[AccessReport]:
    """Mark each sample accessible when a probe reaches it within ``bound``."""
    if bound <= 0:
        raise ValueError(f"bound must be positive, got {bound}")
    probe_points = [as_point(p) for p in probes] if probes else [interior_probe(domain)]
    reports = []
    for sample in samples:
        d = min(float(distance_to_boundary_point(domain, p, sample.point)) for p in probe_points)
        status = "accessible" if d <= bound else "suspected-inaccessible"
        reports.append(AccessReport(sample, status, float(bound), d))
    flagged = sum(r.status != "accessible" for r in reports)
    logger.info(f"Accessibility scan: {len(reports)} samples, {flagged} suspected inaccessible")
    return reports


def sample_boundary(domain: PolygonalDomain, count: int) -> List[BoundarySample]:
    """Evenly spaced boundary samples by uniform-norm arc length."""
    if count <= 0:
        return []
    lengths = [dist_inf(f.a, f.b) for f in domain.features]
    spacing = sum(lengths, Fraction(0)) / count
    samples = []
    offset = Fraction(0)
    feature = 0
    for k in range(count):
        target = (k + Fraction(1, 2)) * spacing
        while offset + lengths[feature] < target:
            offset += lengths[feature]
            feature += 1
        f = domain.features[feature]
        point = lerp(f.a, f.b, (target - offset) / lengths[feature])
        samples.append(BoundarySample(point, domain.features_through(point)[0]))
    return samples
