import xml.etree.ElementTree as ET

import pytest
from pydantic import ValidationError

from boundary_trace.errors import LayerDataMissingError
from boundary_trace.fields import synthesize_test_field
from boundary_trace.intrinsic_metric import split_elements_at
from boundary_trace.render import RenderSpec, render_svg
from boundary_trace.selection import build_pair_graph
from boundary_trace.whitney import whitney_decompose

NS = {"svg": "http://www.w3.org/2000/svg"}


def _parse(text):
    return ET.fromstring(text)


def _group(root, name):
    return root.find(f"svg:g[@id='{name}']", NS)


def test_spec_validation():
    with pytest.raises(ValidationError):
        RenderSpec(layers=["domain", "contours"])
    with pytest.raises(ValidationError):
        RenderSpec(resolution=8)
    with pytest.raises(ValidationError):
        RenderSpec(dpi=300)


def test_missing_layer_data(unit_square):
    with pytest.raises(LayerDataMissingError, match="cubes"):
        render_svg(unit_square, RenderSpec())
    with pytest.raises(LayerDataMissingError, match="field"):
        render_svg(unit_square, RenderSpec(layers=["field-heatmap"]))


def test_domain_and_cubes(unit_square, unit_dec):
    text = render_svg(unit_square, RenderSpec(), dec=unit_dec)
    assert text == render_svg(unit_square, RenderSpec(), dec=unit_dec)
    root = _parse(text)
    assert [g.get("id") for g in root.findall("svg:g", NS)] == ["domain", "cubes"]
    assert len(_group(root, "cubes").findall("svg:rect", NS)) == len(unit_dec.cubes)
    assert _group(root, "domain").find("svg:polygon", NS).get("class") == "outer"
    assert root.get("width") == "800"


def test_slit_drawn_as_polyline(slit_square):
    root = _parse(render_svg(slit_square, RenderSpec(layers=["domain"])))
    slits = _group(root, "domain").findall("svg:polyline", NS)
    assert len(slits) == 1
    assert slits[0].get("class") == "slit"


def test_anchor_and_graph_layers(unit_square, unit_anchors):
    dec = whitney_decompose(unit_square, 3)
    graph = build_pair_graph(dec)
    spec = RenderSpec(layers=["pair-graph"], resolution=200)
    group = _group(_parse(render_svg(unit_square, spec, dec=dec, graph=graph)), "pair-graph")
    assert len(group.findall("svg:line", NS)) == len(graph.edges)
    assert len(group.findall("svg:circle", NS)) == graph.size
    root = _parse(render_svg(unit_square, RenderSpec(layers=["anchors"]), table=unit_anchors))
    distinct = {a.a_q.point for a in unit_anchors.values()}
    assert len(_group(root, "anchors").findall("svg:circle", NS)) == len(distinct)


def test_heatmap_shows_the_jump(slit_square):
    field = synthesize_test_field(slit_square, "slit-witness")
    spec = RenderSpec(layers=["field-heatmap"], viewport=(-1.0, -1.0, 1.0, 1.0), resolution=160, heatmap_cells=16)
    group = _group(_parse(render_svg(slit_square, spec, field=field)), "field-heatmap")
    cells = {(r.get("x"), r.get("y")): r.get("data-value") for r in group.findall("svg:rect", NS)}
    assert len(cells) == 16 * 16
    assert cells[("80", "50")] == "0.0"
    assert cells[("80", "100")] == "1.0"


def test_split_element_sectors(slit_square):
    elements = split_elements_at(slit_square, (0, 0)) + split_elements_at(slit_square, ("0.5", 0))
    group = _group(_parse(render_svg(slit_square, RenderSpec(layers=["split-elements"]), elements=elements)), "split-elements")
    keys = [p.get("data-key") for p in group.findall("svg:path", NS)]
    assert keys == ["0,0,0", "0,0,1", "0.5,0,0"]
    assert len(group.findall("svg:circle", NS)) == 2
