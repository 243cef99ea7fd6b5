"""Dyadic Whitney decompositions of polygonal domains.

A cube Q is accepted when diam Q <= dist(Q, boundary) <= 4 diam Q. Since
dist(Q, boundary) = d(c_Q) - r_Q in the uniform norm, the test reduces to
3 r_Q <= d(c_Q) for a cube whose parent was rejected.
"""
import logging
from collections import deque
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from boundary_trace.errors import DomainTooThinError
from boundary_trace.geometry import (
    BoundarySample,
    Cube,
    Point,
    PolygonalDomain,
    contains,
    cube_dist_to_boundary,
    dist_inf,
    distance_to_features,
    nearest_boundary_point,
    sub,
)
from boundary_trace.intrinsic_metric import SplitElement, completed_distance, split_elements_at

logger = logging.getLogger(__name__)

MAX_DEPTH = 24
STAR_FACTOR = Fraction(9, 8)
FLAVORS = ("standard", "refined")


@dataclass(frozen=True)
class CubeAnchor:
    """Nearest boundary point a_Q and the element omega_Q reached from c_Q."""

    a_q: BoundarySample
    omega_q: SplitElement


@dataclass(frozen=True)
class DecompositionStats:
    min_depth: int
    max_depth: int
    max_neighbors: int
    covering_multiplicity: int
    domain_area: float
    covered_area: float
    skirt_area: float
    skirt_fraction: float


@dataclass(frozen=True)
class WhitneyDecomposition:
    cubes: Tuple[Cube, ...]
    adjacency: Tuple[Tuple[int, ...], ...]
    flavor: str
    stats: DecompositionStats
    depth_limit: int = 0
    anchors: Tuple[CubeAnchor, ...] = ()

    @classmethod
    def from_cubes(
        cls,
        cubes: Sequence[Cube],
        flavor: str = "standard",
        depth_limit: int = 0,
        domain_area: float = 0.0,
    ) -> "WhitneyDecomposition":
        """Assemble a decomposition from cubes, computing adjacency and stats."""
        if flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {flavor!r}")
        cubes = tuple(sorted(cubes, key=_cube_order))
        adjacency = _adjacency(cubes)
        covered = float(sum((c.area for c in cubes), Fraction(0)))
        skirt = max(domain_area - covered, 0.0)
        stats = DecompositionStats(
            min_depth=min((c.depth for c in cubes), default=0),
            max_depth=max((c.depth for c in cubes), default=0),
            max_neighbors=max((len(a) for a in adjacency), default=0),
            covering_multiplicity=_covering_multiplicity(cubes),
            domain_area=domain_area,
            covered_area=covered,
            skirt_area=skirt,
            skirt_fraction=skirt / domain_area if domain_area else 0.0,
        )
        return cls(cubes, adjacency, flavor, stats, depth_limit)

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Centers and half sides as float arrays (exact for dyadic cubes)."""
        cx = np.array([float(c.center.x) for c in self.cubes])
        cy = np.array([float(c.center.y) for c in self.cubes])
        r = np.array([float(c.half_side) for c in self.cubes])
        return cx, cy, r


def _cube_order(cube: Cube):
    return (-cube.half_side, cube.center.y, cube.center.x)


def _adjacency(cubes: Sequence[Cube]) -> Tuple[Tuple[int, ...], ...]:
    if not cubes:
        return ()
    cx = np.array([float(c.center.x) for c in cubes])
    cy = np.array([float(c.center.y) for c in cubes])
    r = np.array([float(c.half_side) for c in cubes])
    result = []
    for i in range(len(cubes)):
        reach = r + r[i]
        mask = (np.abs(cx - cx[i]) <= reach) & (np.abs(cy - cy[i]) <= reach)
        result.append(tuple(int(j) for j in np.flatnonzero(mask)))
    return tuple(result)


def _covering_multiplicity(cubes: Sequence[Cube], chunk: int = 512) -> int:
    if not cubes:
        return 0
    cx = np.array([float(c.center.x) for c in cubes])
    cy = np.array([float(c.center.y) for c in cubes])
    r = np.array([float(c.half_side) for c in cubes])
    rs = r * float(STAR_FACTOR)
    offsets = [(0.0, 0.0)] + [(sx, sy) for sx in (-1.0, 1.0) for sy in (-1.0, 1.0)]
    px = np.concatenate([cx + sx * r for sx, _ in offsets] + [cx + sx * rs for sx, _ in offsets[1:]])
    py = np.concatenate([cy + sy * r for _, sy in offsets] + [cy + sy * rs for _, sy in offsets[1:]])
    best = 0
    for start in range(0, len(px), chunk):
        qx = px[start:start + chunk, None]
        qy = py[start:start + chunk, None]
        inside = (np.abs(qx - cx[None, :]) < rs[None, :]) & (np.abs(qy - cy[None, :]) < rs[None, :])
        best = max(best, int(inside.sum(axis=1).max()))
    return best


def covering_multiplicity(dec: WhitneyDecomposition) -> int:
    """Largest number of open Q* covering a sampled point.

    Samples are the centers and corners of every Q and the corners of every Q*.
    """
    return _covering_multiplicity(dec.cubes)


def _root_cube(domain: PolygonalDomain) -> Cube:
    lo, hi = domain.bbox
    extent = max(hi.x - lo.x, hi.y - lo.y)
    side = Fraction(1)
    while side < extent:
        side *= 2
    while side / 2 >= extent:
        side /= 2
    center = Point((lo.x + hi.x) / 2, (lo.y + hi.y) / 2)
    return Cube(center, side / 2, 0)


def _children(cube: Cube, parts: int = 2) -> List[Cube]:
    """Split a cube into parts x parts equal children."""
    half = cube.half_side / parts
    steps = [cube.half_side * Fraction(2 * k + 1 - parts, parts) for k in range(parts)]
    depth = cube.depth + (parts.bit_length() - 1)
    return [
        Cube(Point(cube.center.x + dx, cube.center.y + dy), half, depth) for dy in steps for dx in steps
    ]


def whitney_decompose(
    domain: PolygonalDomain, depth_limit: int, max_skirt_fraction: float = 0.5
) -> WhitneyDecomposition:
    """Quadtree Whitney decomposition truncated at ``depth_limit``.

    Args:
        domain: Validated domain
        depth_limit: Deepest quadtree level, 1..24
        max_skirt_fraction: Largest tolerated uncovered share of the domain area

    Raises:
        DomainTooThinError: If the uncovered skirt exceeds ``max_skirt_fraction``
    """
    if not 1 <= depth_limit <= MAX_DEPTH:
        raise ValueError(f"depth_limit must be in [1, {MAX_DEPTH}], got {depth_limit}")
    queue = deque([_root_cube(domain)])
    accepted: List[Cube] = []
    processed = 0
    while queue:
        cube = queue.popleft()
        processed += 1
        inside = contains(domain, cube.center)
        d = distance_to_features(domain, cube.center)
        if inside and d >= 3 * cube.half_side:
            accepted.append(cube)
        elif not inside and d > cube.half_side:
            continue
        elif cube.depth < depth_limit:
            queue.extend(_children(cube))
    area = float(domain.area)
    dec = WhitneyDecomposition.from_cubes(accepted, "standard", depth_limit, area)
    logger.info(
        f"Whitney decomposition at depth {depth_limit}: {len(dec.cubes)} cubes from {processed} visited, "
        f"skirt fraction {dec.stats.skirt_fraction:.4f}"
    )
    if dec.stats.skirt_fraction > max_skirt_fraction:
        raise DomainTooThinError(
            f"domain too thin for depth limit {depth_limit}: skirt covers "
            f"{dec.stats.skirt_fraction:.2%} of the area (limit {max_skirt_fraction:.2%})"
        )
    return dec


def refine_4n(dec: WhitneyDecomposition) -> WhitneyDecomposition:
    """Replace every cube by its 16 children of a quarter of its side."""
    if dec.flavor != "standard":
        raise ValueError("refine_4n expects a standard decomposition")
    children = [child for cube in dec.cubes for child in _children(cube, 4)]
    return WhitneyDecomposition.from_cubes(children, "refined", dec.depth_limit + 2, dec.stats.domain_area)


def neighbors(dec: WhitneyDecomposition, k: int) -> List[int]:
    """Indices of all cubes meeting cube ``k``, including ``k`` itself."""
    if not 0 <= k < len(dec.cubes):
        raise IndexError(f"cube index {k} out of range (0..{len(dec.cubes) - 1})")
    return list(dec.adjacency[k])


def anchors(dec: WhitneyDecomposition, domain: PolygonalDomain) -> Dict[int, CubeAnchor]:
    """a_Q and omega_Q for every cube; omega_Q is witnessed by c_Q itself."""
    if dec.anchors:
        return dict(enumerate(dec.anchors))
    elements: Dict[Point, List[SplitElement]] = {}
    result = {}
    for index, cube in enumerate(dec.cubes):
        a_q = nearest_boundary_point(domain, cube.center)
        if a_q.point not in elements:
            elements[a_q.point] = split_elements_at(domain, a_q)
        direction = sub(cube.center, a_q.point)
        omega = next(e for e in elements[a_q.point] if e.contains_direction(direction))
        result[index] = CubeAnchor(a_q, omega.with_witness(cube.center))
    logger.debug(f"Anchored {len(result)} cubes on {len(elements)} distinct boundary points")
    return result


def attach_anchors(dec: WhitneyDecomposition, domain: PolygonalDomain) -> WhitneyDecomposition:
    table = anchors(dec, domain)
    return replace(dec, anchors=tuple(table[i] for i in range(len(dec.cubes))))


# --- audits ---


@dataclass(frozen=True)
class InvariantReport:
    cubes: int
    distance_violations: int
    ratio_violations: int
    overlap_area: Fraction
    star_mismatches: int
    nesting_violations: int
    max_neighbors: int

    @property
    def ok(self) -> bool:
        return not (
            self.distance_violations
            or self.ratio_violations
            or self.overlap_area
            or self.star_mismatches
            or self.nesting_violations
        )


def _overlap(q: Cube, k: Cube) -> Fraction:
    wx = min(q.hi.x, k.hi.x) - max(q.lo.x, k.lo.x)
    wy = min(q.hi.y, k.hi.y) - max(q.lo.y, k.lo.y)
    return wx * wy if wx > 0 and wy > 0 else Fraction(0)


def check_invariants(dec: WhitneyDecomposition, domain: PolygonalDomain) -> InvariantReport:
    """Exact audit of the Whitney and neighbor properties of ``dec``."""
    lo_factor, hi_factor = (1, 4) if dec.flavor == "standard" else (4, 20)
    distance_violations = 0
    center_distance = []
    for cube in dec.cubes:
        d = cube_dist_to_boundary(domain, cube)
        center_distance.append(d + cube.half_side)
        if not lo_factor * cube.diam <= d <= hi_factor * cube.diam:
            distance_violations += 1
    ratio_violations = 0
    overlap = Fraction(0)
    nesting = 0
    for i, near in enumerate(dec.adjacency):
        q = dec.cubes[i]
        for j in near:
            if j == i:
                continue
            k = dec.cubes[j]
            if not q.diam / 4 <= k.diam <= 4 * q.diam:
                ratio_violations += 1
            if j > i:
                overlap += _overlap(q, k)
            if dec.flavor == "refined" and dist_inf(q.center, k.center) + k.half_side > center_distance[i]:
                nesting += 1
    mismatches = 0
    if dec.cubes:
        cx, cy, r = dec.arrays()
        for i in range(len(dec.cubes)):
            reach = (r + r[i]) * float(STAR_FACTOR)
            star = (np.abs(cx - cx[i]) <= reach) & (np.abs(cy - cy[i]) <= reach)
            plain = np.zeros(len(dec.cubes), dtype=bool)
            plain[list(dec.adjacency[i])] = True
            mismatches += int(np.count_nonzero(star != plain))
    return InvariantReport(
        cubes=len(dec.cubes),
        distance_violations=distance_violations,
        ratio_violations=ratio_violations,
        overlap_area=overlap,
        star_mismatches=mismatches,
        nesting_violations=nesting,
        max_neighbors=dec.stats.max_neighbors,
    )


def intersecting_pairs(dec: WhitneyDecomposition) -> List[Tuple[int, int]]:
    return [(i, j) for i, near in enumerate(dec.adjacency) for j in near if j > i]


def anchor_separation_ratio(dec: WhitneyDecomposition, table: Dict[int, CubeAnchor]) -> Fraction:
    """max ||a_Q - a_Q'|| / (diam Q + diam Q') over intersecting pairs."""
    worst = Fraction(0)
    for i, j in intersecting_pairs(dec):
        gap = dist_inf(table[i].a_q.point, table[j].a_q.point)
        worst = max(worst, gap / (dec.cubes[i].diam + dec.cubes[j].diam))
    return worst


def anchor_distance_excess(
    domain: PolygonalDomain,
    dec: WhitneyDecomposition,
    table: Dict[int, CubeAnchor],
    pairs: Optional[Sequence[Tuple[int, int]]] = None,
) -> float:
    """max of d~(omega_Q, omega_Q') - 2 ||a_Q - a_Q'|| over intersecting pairs."""
    worst = -float("inf")
    for i, j in pairs if pairs is not None else intersecting_pairs(dec):
        d = completed_distance(domain, table[i].omega_q, table[j].omega_q)
        gap = float(dist_inf(table[i].a_q.point, table[j].a_q.point))
        worst = max(worst, d - 2 * gap)
    return worst
