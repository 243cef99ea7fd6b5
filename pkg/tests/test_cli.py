import json

import pytest

from boundary_trace import cli
from boundary_trace.cli import main
from boundary_trace.errors import EXIT_INFEASIBLE, EXIT_VALIDATION
from boundary_trace.pipeline import PipelineReport


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in ("WHITNEY_SEED", "WHITNEY_DEPTH", "WHITNEY_WORKERS", "WHITNEY_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)


@pytest.fixture
def star_graph(tmp_path):
    path = tmp_path / "star.json"
    path.write_text(
        json.dumps(
            {
                "n": 2,
                "nodes": [
                    {"id": 0, "constraint": {"kind": "hyperplane", "h": [0, 1], "b": 0}},
                    {"id": 1, "constraint": {"kind": "hyperplane", "h": [0, 1], "b": 1}},
                ],
                "edges": [{"a": 0, "b": 1, "w": 2}],
            }
        )
    )
    return path


@pytest.fixture
def affine_data(tmp_path):
    path = tmp_path / "affine.json"
    path.write_text(json.dumps({"analytic": "affine", "a": [1.0, 2.0], "b": 0.5}))
    return path


def test_decompose_writes_identical_csv(tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["whitney", "decompose", "--domain", "unit_square", "--depth", "4", "--out", str(first)]) == 0
    assert main(["whitney", "decompose", "--domain", "unit_square", "--depth", "4", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().splitlines()[0] == "index,cx,cy,r,depth,aQx,aQy,sector_id"


def test_domain_file_path(tmp_path):
    domain = tmp_path / "square.json"
    domain.write_text(json.dumps({"outer": [["0", "0"], ["2", "0"], ["2", "2"], ["0", "2"]]}))
    out = tmp_path / "cubes.csv"
    assert main(["whitney", "decompose", "--domain", str(domain), "--depth", "4", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) > 1


def test_validation_failures_exit_2(tmp_path):
    out = str(tmp_path / "cubes.csv")
    assert main(["whitney", "decompose", "--domain", str(tmp_path / "nope.json"), "--out", out]) == EXIT_VALIDATION
    assert main(["whitney", "decompose", "--depth", "4", "--out", out]) == EXIT_VALIDATION
    assert main(["whitney", "decompose", "--domain", "slit_square", "--depth", "3", "--out", out]) == EXIT_VALIDATION
    assert main(["extend", "--domain", "unit_square", "--depth", "4", "--out", out]) == EXIT_VALIDATION


def test_skirt_option_admits_coarse_depths(tmp_path):
    out = str(tmp_path / "cubes.csv")
    assert main(["--skirt", "1.0", "whitney", "decompose", "--domain", "slit_square", "--depth", "3", "--out", out]) == 0


def test_metric_prints_distance(capsys):
    assert main(["metric", "dist", "--domain", "slit_square", "--from", "0,0.25", "--to", "0,-0.25"]) == 0
    assert "d = 1" in capsys.readouterr().out


def test_select(tmp_path, star_graph):
    out = tmp_path / "sel.json"
    assert main(["select", "--graph", str(star_graph), "--out", str(out)]) == 0
    document = json.loads(out.read_text())
    assert document["lambda"] == pytest.approx(0.5, abs=1e-9)
    assert document["max_residual"] < 1e-9
    assert main(["select", "--graph", str(star_graph), "--mode", "feas", "--lambda", "0.4", "--out", str(out)]) == (
        EXIT_INFEASIBLE
    )


def test_boundary_split(tmp_path):
    out = tmp_path / "elements.json"
    assert main(["boundary", "split", "--domain", "slit_square", "--samples", "8", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert len(rows) >= 8
    assert all(set(row) == {"anchor", "carrier", "witness", "sector", "key"} for row in rows)


def test_extend_from_data(tmp_path, affine_data):
    out = tmp_path / "extend.json"
    argv = ["extend", "--domain", "unit_square", "--depth", "4", "--data", str(affine_data), "--eval-grid", "4"]
    assert main(argv + ["--out", str(out)]) == 0
    document = json.loads(out.read_text())
    assert document["command"] == "extend"
    assert document["grid"]
    assert all(len(row) == 5 for row in document["grid"])
    for x, y, value, fx, fy in document["grid"]:
        assert value == pytest.approx(0.5 + x + 2.0 * y, abs=1e-6)


def test_check_fp_report_and_store(tmp_path, affine_data):
    report, store = tmp_path / "fp.json", tmp_path / "runs.json"
    argv = ["--store", str(store), "check-fp", "--domain", "unit_square", "--depth", "3", "--data", str(affine_data)]
    assert main(argv + ["--budget", "10", "--equiv", "1e-3", "--report", str(report)]) == 0
    document = json.loads(report.read_text())
    assert document["status"] == "ok"
    assert document["budget"] == 10
    assert json.loads(store.read_text())["check-fp"]["status"] == "ok"


def test_equiv_flag_reaches_the_check(tmp_path, affine_data, monkeypatch):
    seen = {}

    def fake_check(domain, data, depth, **options):
        seen.update(options)
        return PipelineReport(command="check-fp", depth=depth)

    monkeypatch.setattr(cli, "check_finiteness", fake_check)
    argv = ["check-fp", "--domain", "unit_square", "--depth", "3", "--data", str(affine_data), "--equiv", "0.5"]
    assert main(argv + ["--report", str(tmp_path / "fp.json")]) == 0
    assert seen["equiv_tol"] == 0.5


def test_render(tmp_path):
    out = tmp_path / "view.svg"
    argv = ["render", "--domain", "slit_square", "--depth", "4", "--layers", "domain,cubes,split-elements"]
    assert main(argv + ["--resolution", "200", "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("<svg")
    assert 'id="split-elements"' in text
    bad = ["render", "--domain", "slit_square", "--layers", "domain,contours", "--out", str(out)]
    assert main(bad) == EXIT_VALIDATION
