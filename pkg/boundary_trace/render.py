"""Layered SVG views of domains, cubes, anchors, pair graphs, fields and split elements."""
import logging
import math
import xml.etree.ElementTree as ET
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from boundary_trace.errors import LayerDataMissingError, NonConvergenceError
from boundary_trace.geometry import Point, PolygonalDomain, contains
from boundary_trace.intrinsic_metric import SplitElement
from boundary_trace.selection import PairGraph
from boundary_trace.whitney import CubeAnchor, WhitneyDecomposition

logger = logging.getLogger(__name__)

LAYERS = ("domain", "cubes", "anchors", "pair-graph", "field-heatmap", "split-elements")
MAX_RESOLUTION = 8192


class RenderSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    layers: List[str] = Field(default_factory=lambda: ["domain", "cubes"])
    viewport: Optional[Tuple[float, float, float, float]] = None
    resolution: int = Field(800, ge=16, le=MAX_RESOLUTION)
    heatmap_cells: int = Field(64, ge=1, le=MAX_RESOLUTION)

    @field_validator("layers")
    @classmethod
    def _known_layers(cls, value: List[str]) -> List[str]:
        unknown = [layer for layer in value if layer not in LAYERS]
        if unknown:
            raise ValueError(f"unknown layers {unknown}; choose from {', '.join(LAYERS)}")
        return value


def _num(value: float) -> str:
    return f"{value:.3f}".rstrip("0").rstrip(".") or "0"


class _Canvas:
    def __init__(self, viewport: Tuple[float, float, float, float], resolution: int):
        self.x0, self.y0, self.x1, self.y1 = viewport
        self.scale = resolution / (self.x1 - self.x0)
        self.width = resolution
        self.height = max(1, int(round((self.y1 - self.y0) * self.scale)))

    def xy(self, x: float, y: float) -> Tuple[str, str]:
        return _num((x - self.x0) * self.scale), _num((self.y1 - y) * self.scale)

    def length(self, d: float) -> str:
        return _num(d * self.scale)


def _depth_color(depth: int) -> str:
    return f"hsl({(depth * 47) % 360},70%,40%)"


def _value_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    return f"rgb({int(round(255 * t))},{int(round(80 + 60 * (1 - abs(2 * t - 1))))},{int(round(255 * (1 - t)))})"


def _points(canvas: _Canvas, ring: Sequence[Point]) -> str:
    return " ".join(",".join(canvas.xy(*p.as_float())) for p in ring)


def _domain_layer(root: ET.Element, canvas: _Canvas, domain: PolygonalDomain) -> None:
    group = ET.SubElement(root, "g", {"id": "domain", "fill": "none", "stroke": "black"})
    ET.SubElement(group, "polygon", {"class": "outer", "points": _points(canvas, domain.outer)})
    for hole in domain.holes:
        ET.SubElement(group, "polygon", {"class": "hole", "points": _points(canvas, hole)})
    for slit in domain.slits:
        ET.SubElement(group, "polyline", {"class": "slit", "stroke": "crimson", "points": _points(canvas, slit)})


def _cube_layer(root: ET.Element, canvas: _Canvas, dec: WhitneyDecomposition) -> None:
    group = ET.SubElement(root, "g", {"id": "cubes", "fill": "none", "stroke-width": "0.5"})
    for k, cube in enumerate(dec.cubes):
        x, y = canvas.xy(float(cube.lo.x), float(cube.hi.y))
        side = canvas.length(float(cube.diam))
        ET.SubElement(
            group,
            "rect",
            {"x": x, "y": y, "width": side, "height": side, "stroke": _depth_color(cube.depth), "data-index": str(k)},
        )


def _anchor_layer(root: ET.Element, canvas: _Canvas, table: Mapping[int, CubeAnchor]) -> None:
    group = ET.SubElement(root, "g", {"id": "anchors", "fill": "navy"})
    seen = set()
    for k in sorted(table):
        p = table[k].a_q.point
        if p in seen:
            continue
        seen.add(p)
        cx, cy = canvas.xy(*p.as_float())
        ET.SubElement(group, "circle", {"cx": cx, "cy": cy, "r": "1.5"})


def _graph_layer(root: ET.Element, canvas: _Canvas, graph: PairGraph, dec: WhitneyDecomposition) -> None:
    group = ET.SubElement(root, "g", {"id": "pair-graph", "stroke": "gray", "stroke-width": "0.3"})
    spots = []
    for p in graph.pairs:
        a, b = dec.cubes[p.q].center, dec.cubes[p.k].center
        spots.append(((float(a.x) + float(b.x)) / 2, (float(a.y) + float(b.y)) / 2))
    for a, b, _ in graph.edges:
        x1, y1 = canvas.xy(*spots[a])
        x2, y2 = canvas.xy(*spots[b])
        ET.SubElement(group, "line", {"x1": x1, "y1": y1, "x2": x2, "y2": y2})
    for x, y in spots:
        cx, cy = canvas.xy(x, y)
        ET.SubElement(group, "circle", {"cx": cx, "cy": cy, "r": "0.8", "fill": "gray"})


def _heatmap_layer(root: ET.Element, canvas: _Canvas, domain: PolygonalDomain, field: Any, cells: int) -> None:
    group = ET.SubElement(root, "g", {"id": "field-heatmap", "stroke": "none"})
    step_x = (canvas.x1 - canvas.x0) / cells
    rows = max(1, int(round((canvas.y1 - canvas.y0) / step_x)))
    step_y = (canvas.y1 - canvas.y0) / rows
    samples: List[Tuple[float, float, float]] = []
    for j in range(rows):
        for i in range(cells):
            x, y = canvas.x0 + (i + 0.5) * step_x, canvas.y0 + (j + 0.5) * step_y
            p = Point.of(x, y)
            if not contains(domain, p):
                continue
            try:
                samples.append((x, y, field.evaluate(p).value))
            except NonConvergenceError:
                continue
    if not samples:
        return
    lo = min(v for _, _, v in samples)
    hi = max(v for _, _, v in samples)
    spread = hi - lo if hi > lo else 1.0
    for x, y, v in samples:
        px, py = canvas.xy(x - step_x / 2, y + step_y / 2)
        ET.SubElement(
            group,
            "rect",
            {
                "x": px,
                "y": py,
                "width": canvas.length(step_x),
                "height": canvas.length(step_y),
                "fill": _value_color((v - lo) / spread),
                "data-value": repr(float(v)),
            },
        )


def _arc(canvas: _Canvas, center: Point, radius: float, theta0: float, theta1: float) -> str:
    cx, cy = center.as_float()
    sweep = (theta1 - theta0) % (2 * math.pi) or 2 * math.pi
    if sweep >= 2 * math.pi - 1e-9:
        sweep = 2 * math.pi - 1e-3
    end = theta0 + sweep
    x0, y0 = canvas.xy(cx + radius * math.cos(theta0), cy + radius * math.sin(theta0))
    x1, y1 = canvas.xy(cx + radius * math.cos(end), cy + radius * math.sin(end))
    large = 1 if sweep > math.pi else 0
    r = canvas.length(radius)
    return f"M {x0} {y0} A {r} {r} 0 {large} 0 {x1} {y1}"


def _element_layer(root: ET.Element, canvas: _Canvas, elements: Sequence[SplitElement]) -> None:
    group = ET.SubElement(root, "g", {"id": "split-elements", "fill": "none", "stroke": "darkorange"})
    radius = 6.0 / canvas.scale
    for anchor in sorted({e.anchor.point for e in elements}):
        cx, cy = canvas.xy(*anchor.as_float())
        ET.SubElement(group, "circle", {"cx": cx, "cy": cy, "r": "1.5", "fill": "darkorange"})
    for e in elements:
        ET.SubElement(
            group,
            "path",
            {"class": "sector", "d": _arc(canvas, e.anchor.point, radius, e.theta0, e.theta1), "data-key": e.key},
        )


def render_svg(
    domain: PolygonalDomain,
    spec: RenderSpec,
    dec: Optional[WhitneyDecomposition] = None,
    table: Optional[Mapping[int, CubeAnchor]] = None,
    graph: Optional[PairGraph] = None,
    field: Any = None,
    elements: Optional[Sequence[SplitElement]] = None,
) -> str:
    """Render the requested layers in order.

    Raises:
        LayerDataMissingError: If a layer is requested without its artifact
    """
    needs: Dict[str, Tuple[str, Any]] = {
        "cubes": ("decomposition", dec),
        "anchors": ("anchors", table),
        "pair-graph": ("pair graph", graph if dec is not None else None),
        "field-heatmap": ("field", field),
        "split-elements": ("split elements", elements),
    }
    for layer in spec.layers:
        if layer in needs and needs[layer][1] is None:
            raise LayerDataMissingError(f"layer data missing: {layer} needs a {needs[layer][0]}")
    if spec.viewport is None:
        lo, hi = domain.bbox
        pad = max(float(hi.x - lo.x), float(hi.y - lo.y)) * 0.02
        viewport = (float(lo.x) - pad, float(lo.y) - pad, float(hi.x) + pad, float(hi.y) + pad)
    else:
        viewport = spec.viewport
    canvas = _Canvas(viewport, spec.resolution)
    root = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "width": str(canvas.width),
            "height": str(canvas.height),
            "viewBox": f"0 0 {canvas.width} {canvas.height}",
        },
    )
    for layer in spec.layers:
        if layer == "domain":
            _domain_layer(root, canvas, domain)
        elif layer == "cubes":
            _cube_layer(root, canvas, dec)
        elif layer == "anchors":
            _anchor_layer(root, canvas, table)
        elif layer == "pair-graph":
            _graph_layer(root, canvas, graph, dec)
        elif layer == "field-heatmap":
            _heatmap_layer(root, canvas, domain, field, spec.heatmap_cells)
        elif layer == "split-elements":
            _element_layer(root, canvas, elements)
    logger.info(f"Rendered {len(spec.layers)} layers at {canvas.width}x{canvas.height}")
    return ET.tostring(root, encoding="unicode") + "\n"
