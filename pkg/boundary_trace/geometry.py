"""Exact planar geometry for polygonal domains with holes and slits.

All lengths are measured in the uniform (max) norm. Coordinates are kept as
``Fraction`` values so that predicates on dyadic inputs run without rounding;
binary64 inputs are converted exactly to their dyadic value.
"""
import logging
import math
import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

from typing_extensions import TypeAlias

from boundary_trace.errors import (
    CubeNotInsideError,
    DomainValidationError,
    NotBoundaryPointError,
    OutsideDomainError,
)

logger = logging.getLogger(__name__)

Number: TypeAlias = Union[Fraction, int, float, str]
Intersection: TypeAlias = Union[None, "Point", Tuple["Point", "Point"]]


def is_dyadic(value: Fraction) -> bool:
    """True when the denominator of ``value`` is a power of two."""
    d = value.denominator
    return d & (d - 1) == 0


def to_exact(value: Number) -> Fraction:
    """Convert a coordinate to an exact rational.

    Decimal strings are parsed exactly when the result is dyadic; otherwise
    the binary64 value of the string is used, which is always dyadic.

    Args:
        value: Fraction, integer, float or decimal string

    Returns:
        The exact rational value

    Raises:
        ValueError: For non-finite or unparsable input
    """
    if isinstance(value, bool):
        raise ValueError(f"boolean is not a coordinate: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, numbers.Integral):
        return Fraction(int(value))
    if isinstance(value, numbers.Real):
        number = float(value)
        if not math.isfinite(number):
            raise ValueError(f"non-finite coordinate {value!r}")
        return Fraction(number)
    if isinstance(value, str):
        text = value.strip()
        try:
            exact = Fraction(text)
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"not a number: {value!r}") from e
        if is_dyadic(exact):
            return exact
        number = float(text)
        if not math.isfinite(number):
            raise ValueError(f"non-finite coordinate {value!r}")
        return Fraction(number)
    raise ValueError(f"unsupported coordinate type {type(value).__name__}")


class Point(NamedTuple):
    """A point (or vector) of the plane with exact coordinates."""

    x: Fraction
    y: Fraction

    @classmethod
    def of(cls, x: Number, y: Number) -> "Point":
        return cls(to_exact(x), to_exact(y))

    def as_float(self) -> Tuple[float, float]:
        return float(self.x), float(self.y)


PointLike: TypeAlias = Union[Point, Sequence[Number]]


def as_point(value: PointLike) -> Point:
    if isinstance(value, Point):
        return value
    x, y = value
    return Point.of(x, y)


def sub(p: Point, q: Point) -> Point:
    return Point(p.x - q.x, p.y - q.y)


def add(p: Point, q: Point) -> Point:
    return Point(p.x + q.x, p.y + q.y)


def scale(p: Point, s: Fraction) -> Point:
    return Point(p.x * s, p.y * s)


def lerp(a: Point, b: Point, t: Fraction) -> Point:
    return Point(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))


def cross(u: Point, v: Point) -> Fraction:
    return u.x * v.y - u.y * v.x


def dot(u: Point, v: Point) -> Fraction:
    return u.x * v.x + u.y * v.y


def norm_inf(v: Point) -> Fraction:
    return max(abs(v.x), abs(v.y))


def dist_inf(p: Point, q: Point) -> Fraction:
    return max(abs(p.x - q.x), abs(p.y - q.y))


def norm2(v: Point) -> float:
    return math.hypot(float(v.x), float(v.y))


def _sign(value: Fraction) -> int:
    return (value > 0) - (value < 0)


def orient(a: Point, b: Point, c: Point) -> int:
    """Sign of the turn a -> b -> c (1 counterclockwise, -1 clockwise, 0 collinear)."""
    return _sign(cross(sub(b, a), sub(c, a)))


def on_segment(p: Point, a: Point, b: Point) -> bool:
    """True when ``p`` lies on the closed segment [a, b]."""
    if cross(sub(b, a), sub(p, a)) != 0:
        return False
    return min(a.x, b.x) <= p.x <= max(a.x, b.x) and min(a.y, b.y) <= p.y <= max(a.y, b.y)


def segment_intersection(a: Point, b: Point, c: Point, d: Point) -> Intersection:
    """Intersect the closed segments [a, b] and [c, d].

    Returns:
        None when disjoint, a Point for a single common point, or a pair of
        Points bounding a collinear overlap of positive length
    """
    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    if o1 == 0 and o2 == 0:
        if a == b:
            return a if on_segment(a, c, d) else None
        direction = sub(b, a)
        length = dot(direction, direction)
        tc = dot(sub(c, a), direction) / length
        td = dot(sub(d, a), direction) / length
        lo, hi = max(Fraction(0), min(tc, td)), min(Fraction(1), max(tc, td))
        if lo > hi:
            return None
        if lo == hi:
            return lerp(a, b, lo)
        return lerp(a, b, lo), lerp(a, b, hi)
    if o1 * o2 > 0 or o3 * o4 > 0:
        return None
    if o1 == 0:
        return c
    if o2 == 0:
        return d
    if o3 == 0:
        return a
    if o4 == 0:
        return b
    t = cross(sub(d, c), sub(c, a)) / cross(sub(d, c), sub(b, a))
    return lerp(a, b, t)


def ring_signed_area(ring: Sequence[Point]) -> Fraction:
    total = Fraction(0)
    for i, p in enumerate(ring):
        q = ring[(i + 1) % len(ring)]
        total += p.x * q.y - q.x * p.y
    return total / 2


def point_in_ring(p: Point, ring: Sequence[Point]) -> bool:
    """Crossing-number test; ``p`` must not lie on the ring."""
    inside = False
    n = len(ring)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        if (a.y > p.y) != (b.y > p.y):
            x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y)
            if p.x < x_cross:
                inside = not inside
    return inside


def _on_ring(p: Point, ring: Sequence[Point]) -> bool:
    return any(on_segment(p, ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring)))


@dataclass(frozen=True)
class Cube:
    """Closed axis-parallel square Q(c, r) = {x : ||x - c|| <= r}."""

    center: Point
    half_side: Fraction
    depth: int = 0

    def __post_init__(self):
        if self.half_side <= 0:
            raise ValueError(f"cube half side must be positive, got {self.half_side}")

    @classmethod
    def of(cls, center: PointLike, half_side: Number, depth: int = 0) -> "Cube":
        return cls(as_point(center), to_exact(half_side), depth)

    @property
    def diam(self) -> Fraction:
        return 2 * self.half_side

    @property
    def lo(self) -> Point:
        return Point(self.center.x - self.half_side, self.center.y - self.half_side)

    @property
    def hi(self) -> Point:
        return Point(self.center.x + self.half_side, self.center.y + self.half_side)

    @property
    def area(self) -> Fraction:
        return self.diam * self.diam

    def corners(self) -> Tuple[Point, Point, Point, Point]:
        """Corners in counterclockwise order starting at the lower left."""
        lo, hi = self.lo, self.hi
        return (lo, Point(hi.x, lo.y), hi, Point(lo.x, hi.y))

    def contains_point(self, p: Point) -> bool:
        return dist_inf(p, self.center) <= self.half_side

    def intersects(self, other: "Cube") -> bool:
        return dist_inf(self.center, other.center) <= self.half_side + other.half_side


def dilate(cube: Cube, factor: Number) -> Cube:
    """Return Q(c_Q, factor * r_Q)."""
    lam = to_exact(factor)
    if lam <= 0:
        raise ValueError(f"dilation factor must be positive, got {factor}")
    return Cube(cube.center, cube.half_side * lam, cube.depth)


class Feature(NamedTuple):
    """One boundary segment; ``group`` is the ring or slit index."""

    kind: str
    group: int
    index: int
    a: Point
    b: Point


@dataclass(frozen=True)
class BoundarySample:
    """A boundary point together with the lowest-index feature carrying it."""

    point: Point
    carrier: int


@dataclass(frozen=True)
class PolygonalDomain:
    """Open planar region: interior of ``outer`` minus closed holes and slits.

    Use :func:`build_domain` to construct a validated instance.
    """

    outer: Tuple[Point, ...]
    holes: Tuple[Tuple[Point, ...], ...] = ()
    slits: Tuple[Tuple[Point, ...], ...] = ()
    exact: bool = field(default=True, compare=False)

    @cached_property
    def features(self) -> Tuple[Feature, ...]:
        items: List[Feature] = []
        n = len(self.outer)
        for i in range(n):
            items.append(Feature("outer", 0, i, self.outer[i], self.outer[(i + 1) % n]))
        for h, hole in enumerate(self.holes):
            m = len(hole)
            for i in range(m):
                items.append(Feature("hole", h, i, hole[i], hole[(i + 1) % m]))
        for s, slit in enumerate(self.slits):
            for i in range(len(slit) - 1):
                items.append(Feature("slit", s, i, slit[i], slit[i + 1]))
        return tuple(items)

    @cached_property
    def vertices(self) -> Tuple[Point, ...]:
        """Distinct boundary vertices in feature order."""
        seen: Dict[Point, None] = {}
        for f in self.features:
            seen.setdefault(f.a, None)
            seen.setdefault(f.b, None)
        return tuple(seen)

    @cached_property
    def bbox(self) -> Tuple[Point, Point]:
        xs = [p.x for p in self.outer]
        ys = [p.y for p in self.outer]
        return Point(min(xs), min(ys)), Point(max(xs), max(ys))

    @cached_property
    def area(self) -> Fraction:
        return abs(ring_signed_area(self.outer)) - sum(
            (abs(ring_signed_area(h)) for h in self.holes), Fraction(0)
        )

    def features_through(self, p: Point) -> Tuple[int, ...]:
        return tuple(i for i, f in enumerate(self.features) if on_segment(p, f.a, f.b))


def contains(domain: PolygonalDomain, p: PointLike) -> bool:
    """True iff ``p`` lies in the open domain."""
    p = as_point(p)
    for f in domain.features:
        if on_segment(p, f.a, f.b):
            return False
    if not point_in_ring(p, domain.outer):
        return False
    return not any(point_in_ring(p, hole) for hole in domain.holes)


def on_boundary(domain: PolygonalDomain, p: PointLike) -> bool:
    return bool(domain.features_through(as_point(p)))


def _segment_linf(p: Point, a: Point, b: Point) -> Tuple[Fraction, Fraction, Fraction]:
    """Uniform-norm distance from ``p`` to [a, b] with its argmin interval.

    The distance along the segment is convex and piecewise linear in the
    parameter, so checking its breakpoints is exact.

    Returns:
        (distance, t_lo, t_hi) where [t_lo, t_hi] is the set of minimizers
    """
    dx, dy = b.x - a.x, b.y - a.y
    ux, uy = a.x - p.x, a.y - p.y
    candidates = {Fraction(0), Fraction(1)}
    if dx:
        candidates.add(-ux / dx)
    if dy:
        candidates.add(-uy / dy)
    if dx != dy:
        candidates.add((uy - ux) / (dx - dy))
    if dx != -dy:
        candidates.add(-(ux + uy) / (dx + dy))
    ts = sorted(t for t in candidates if 0 <= t <= 1)
    values = [max(abs(ux + t * dx), abs(uy + t * dy)) for t in ts]
    best = min(values)
    hits = [i for i, v in enumerate(values) if v == best]
    return best, ts[hits[0]], ts[hits[-1]]


def distance_to_features(domain: PolygonalDomain, p: PointLike) -> Fraction:
    """Distance from any point of the plane to the boundary features."""
    p = as_point(p)
    return min(_segment_linf(p, f.a, f.b)[0] for f in domain.features)


def dist_to_boundary(domain: PolygonalDomain, p: PointLike) -> Fraction:
    p = as_point(p)
    if not contains(domain, p):
        raise OutsideDomainError(f"point ({p.x}, {p.y}) is outside the domain")
    return distance_to_features(domain, p)


def nearest_boundary_point(domain: PolygonalDomain, p: PointLike) -> BoundarySample:
    """Lexicographically smallest boundary point at minimal uniform distance.

    Raises:
        OutsideDomainError: If ``p`` is not in the domain
    """
    p = as_point(p)
    if not contains(domain, p):
        raise OutsideDomainError(f"point ({p.x}, {p.y}) is outside the domain")
    per_feature = [_segment_linf(p, f.a, f.b) for f in domain.features]
    best = min(d for d, _, _ in per_feature)
    winner: Optional[Tuple[Point, int]] = None
    for index, (d, t_lo, t_hi) in enumerate(per_feature):
        if d != best:
            continue
        f = domain.features[index]
        for t in (t_lo, t_hi):
            q = lerp(f.a, f.b, t)
            if winner is None or q < winner[0]:
                winner = (q, index)
    point = winner[0]
    return BoundarySample(point, domain.features_through(point)[0])


def boundary_sample(domain: PolygonalDomain, p: PointLike) -> BoundarySample:
    """Wrap a boundary point with its carrier feature."""
    p = as_point(p)
    carriers = domain.features_through(p)
    if not carriers:
        raise NotBoundaryPointError(f"point ({p.x}, {p.y}) is not on the boundary")
    return BoundarySample(p, carriers[0])


def cube_dist_to_boundary(domain: PolygonalDomain, cube: Cube) -> Fraction:
    """dist(Q, boundary) = dist(c_Q, boundary) - r_Q in the uniform norm."""
    if not contains(domain, cube.center):
        raise CubeNotInsideError(f"cube center ({cube.center.x}, {cube.center.y}) is outside the domain")
    d = distance_to_features(domain, cube.center)
    if d < cube.half_side:
        raise CubeNotInsideError(
            f"cube of half side {cube.half_side} at ({cube.center.x}, {cube.center.y}) meets the boundary"
        )
    return d - cube.half_side


def segment_in_domain(domain: PolygonalDomain, a: PointLike, b: PointLike) -> bool:
    """True iff every point of the closed segment [a, b] lies in the domain."""
    a, b = as_point(a), as_point(b)
    if not (contains(domain, a) and contains(domain, b)):
        return False
    return all(segment_intersection(a, b, f.a, f.b) is None for f in domain.features)


def segment_visible(domain: PolygonalDomain, a: PointLike, b: PointLike) -> bool:
    """True iff the open segment (a, b) lies in the domain.

    The endpoints themselves may sit on the boundary.
    """
    a, b = as_point(a), as_point(b)
    if a == b:
        return contains(domain, a)
    for f in domain.features:
        hit = segment_intersection(a, b, f.a, f.b)
        if hit is None:
            continue
        if isinstance(hit, Point) and (hit == a or hit == b):
            continue
        return False
    return contains(domain, lerp(a, b, Fraction(1, 2)))


# --- validation ---


def _check_ring(ring: Tuple[Point, ...], feature: str, index: int) -> None:
    n = len(ring)
    if n < 3:
        raise DomainValidationError(f"{feature} ring {index} has fewer than 3 vertices", feature, index)
    for i in range(n):
        if ring[i] == ring[(i + 1) % n]:
            raise DomainValidationError(f"repeated vertex in {feature} ring {index} at edge {i}", feature, i)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        for j in range(i + 1, n):
            c, d = ring[j], ring[(j + 1) % n]
            hit = segment_intersection(a, b, c, d)
            if j == i + 1:
                allowed = b
            elif i == 0 and j == n - 1:
                allowed = a
            else:
                allowed = None
            if hit is None or (allowed is not None and hit == allowed):
                continue
            raise DomainValidationError(f"non-simple ring at edge {j} of {feature} ring {index}", feature, j)
    if ring_signed_area(ring) == 0:
        raise DomainValidationError(f"{feature} ring {index} has zero area", feature, index)


def _oriented(ring: Tuple[Point, ...], ccw: bool, feature: str, index: int) -> Tuple[Point, ...]:
    if (ring_signed_area(ring) > 0) != ccw:
        logger.warning(f"Reversing orientation of {feature} ring {index}")
        return tuple(reversed(ring))
    return ring


def _ring_edges(ring: Sequence[Point]):
    n = len(ring)
    return [(ring[i], ring[(i + 1) % n]) for i in range(n)]


def _slit_segments(slit: Sequence[Point]):
    return [(slit[i], slit[i + 1]) for i in range(len(slit) - 1)]


def _check_slit(slit: Tuple[Point, ...], index: int) -> None:
    if len(slit) < 2:
        raise DomainValidationError(f"slit {index} needs at least 2 points", "slit", index)
    segments = _slit_segments(slit)
    for i, (a, b) in enumerate(segments):
        if a == b:
            raise DomainValidationError(f"slit {index} has a zero-length segment {i}", "slit", index)
        for j in range(i + 1, len(segments)):
            hit = segment_intersection(a, b, *segments[j])
            if hit is None or (j == i + 1 and hit == b):
                continue
            raise DomainValidationError(f"non-simple slit {index} at segment {j}", "slit", index)


def _in_closed_region(p: Point, outer: Sequence[Point], holes: Sequence[Sequence[Point]]) -> bool:
    if not (_on_ring(p, outer) or point_in_ring(p, outer)):
        return False
    for hole in holes:
        if not _on_ring(p, hole) and point_in_ring(p, hole):
            return False
    return True


def _arrangement_faces(domain: PolygonalDomain) -> int:
    """Number of bounded faces of the boundary arrangement (Euler count)."""
    points = list(domain.vertices)
    index = {p: i for i, p in enumerate(points)}
    edges = set()
    for f in domain.features:
        direction = sub(f.b, f.a)
        length = dot(direction, direction)
        on = sorted(
            (dot(sub(p, f.a), direction) / length, index[p]) for p in points if on_segment(p, f.a, f.b)
        )
        for (_, i), (_, j) in zip(on, on[1:]):
            edges.add((min(i, j), max(i, j)))
    parent = list(range(len(points)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in edges:
        parent[find(i)] = find(j)
    components = len({find(i) for i in range(len(points))})
    return len(edges) - len(points) + components


def build_domain(
    outer: Sequence[PointLike],
    holes: Sequence[Sequence[PointLike]] = (),
    slits: Sequence[Sequence[PointLike]] = (),
    exact: bool = True,
) -> PolygonalDomain:
    """Validate raw rings and slits and return a domain.

    Raises:
        DomainValidationError: Naming the offending ring or segment
    """
    outer_ring = tuple(as_point(p) for p in outer)
    hole_rings = [tuple(as_point(p) for p in hole) for hole in holes]
    slit_lines = [tuple(as_point(p) for p in slit) for slit in slits]

    # --- Step 1: rings are simple and oriented ---
    _check_ring(outer_ring, "outer", 0)
    outer_ring = _oriented(outer_ring, True, "outer", 0)
    for h, hole in enumerate(hole_rings):
        _check_ring(hole, "hole", h)
        hole_rings[h] = _oriented(hole, False, "hole", h)

    # --- Step 2: holes inside outer and pairwise disjoint ---
    outer_edges = _ring_edges(outer_ring)
    for h, hole in enumerate(hole_rings):
        edges = _ring_edges(hole)
        if any(segment_intersection(a, b, c, d) is not None for a, b in edges for c, d in outer_edges):
            raise DomainValidationError(f"hole {h} touches the outer ring", "hole", h)
        if not point_in_ring(hole[0], outer_ring):
            raise DomainValidationError(f"hole {h} lies outside the outer ring", "hole", h)
        for g in range(h):
            other = hole_rings[g]
            if any(segment_intersection(a, b, c, d) is not None for a, b in edges for c, d in _ring_edges(other)):
                raise DomainValidationError(f"holes {g} and {h} intersect", "hole", h)
            if point_in_ring(hole[0], other) or point_in_ring(other[0], hole):
                raise DomainValidationError(f"holes {g} and {h} are nested", "hole", h)

    # --- Step 3: slits are simple, in the closed region, touching only at ends ---
    ring_edges = outer_edges + [e for hole in hole_rings for e in _ring_edges(hole)]
    for s, slit in enumerate(slit_lines):
        _check_slit(slit, s)
        ends = (slit[0], slit[-1])
        for i, (a, b) in enumerate(_slit_segments(slit)):
            for p in (a, b, lerp(a, b, Fraction(1, 2))):
                if not _in_closed_region(p, outer_ring, hole_rings):
                    raise DomainValidationError(f"slit {s} segment {i} leaves the closed region", "slit", s)
            for c, d in ring_edges:
                hit = segment_intersection(a, b, c, d)
                if hit is not None and not (isinstance(hit, Point) and hit in ends):
                    raise DomainValidationError(f"slit {s} segment {i} meets a ring away from its ends", "slit", s)
        for t in range(s):
            other = slit_lines[t]
            other_ends = (other[0], other[-1])
            for a, b in _slit_segments(slit):
                for c, d in _slit_segments(other):
                    hit = segment_intersection(a, b, c, d)
                    if hit is None:
                        continue
                    if isinstance(hit, Point) and (hit in ends or hit in other_ends):
                        continue
                    raise DomainValidationError(f"slits {t} and {s} cross", "slit", s)

    domain = PolygonalDomain(outer_ring, tuple(hole_rings), tuple(slit_lines), exact)

    # --- Step 4: the open set is connected ---
    if _arrangement_faces(domain) - len(hole_rings) != 1:
        raise DomainValidationError("disconnected domain: slits or holes separate the region", "domain", None)
    return domain
