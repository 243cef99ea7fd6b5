"""
Command-line entry point: whitney-trace <command> ...

Example:
    whitney-trace whitney decompose --domain slit_square --depth 5 --out cubes.csv
    whitney-trace check-fp --domain slit_square --data f.json --depth 5 --report report.json
"""
import argparse
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from boundary_trace.config import RunConfig, load_config
from boundary_trace.domain_file import FIXTURES, format_exact, load_fixture, parse_domain
from boundary_trace.errors import (
    EXIT_INFEASIBLE,
    ConfigError,
    DomainFileError,
    NonConvergenceError,
    ReportIOError,
    TraceError,
)
from boundary_trace.extension import BoundaryJet, check_jet_compat, eval_field, seminorm_estimate, whitney_extend
from boundary_trace.fields import FIELD_KINDS, synthesize_test_field
from boundary_trace.geometry import Point, PolygonalDomain, contains
from boundary_trace.intrinsic_metric import (
    accessibility_scan,
    intrinsic_distance,
    sample_boundary,
    split_elements_at,
)
from boundary_trace.pipeline import (
    BoundaryData,
    PipelineReport,
    check_finiteness,
    extend_from_boundary,
    visible_subset_check,
)
from boundary_trace.render import LAYERS, RenderSpec, render_svg
from boundary_trace.report_store import CUBE_FIELDS, ReportStore, cube_rows, emit_report
from boundary_trace.selection import build_pair_graph, graph_from_dict, lipschitz_selection
from boundary_trace.whitney import FLAVORS, anchors, check_invariants, refine_4n, whitney_decompose

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


# --- input helpers ---


def _load_domain(value: str) -> PolygonalDomain:
    """A domain file path, or the name of a bundled fixture."""
    if not Path(value).exists() and value in FIXTURES:
        return load_fixture(value)
    return parse_domain(value)


def _load_json(path: str, what: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DomainFileError(f"cannot read {what} file {path}: {e}") from e


def _parse_xy(value: str) -> Point:
    try:
        x, y = value.split(",")
        return Point.of(x.strip(), y.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected x,y but got {value!r}") from e


def _decompose(domain: PolygonalDomain, config: RunConfig, flavor: str = "standard"):
    dec = whitney_decompose(domain, config.depth, config.max_skirt_fraction)
    return refine_4n(dec) if flavor == "refined" else dec


def _grid_values(F: Any, domain: PolygonalDomain, per_side: int) -> List[List[float]]:
    """[x, y, F, Fx, Fy] at cell centres of a per_side x per_side grid that F covers."""
    lo, hi = domain.bbox
    x0, y0 = float(lo.x), float(lo.y)
    step_x, step_y = float(hi.x - lo.x) / per_side, float(hi.y - lo.y) / per_side
    rows = []
    for j in range(per_side):
        for i in range(per_side):
            p = Point.of(x0 + (i + 0.5) * step_x, y0 + (j + 0.5) * step_y)
            if not contains(domain, p):
                continue
            try:
                value = eval_field(F, p)
            except NonConvergenceError:
                continue
            x, y = p.as_float()
            rows.append([x, y, value.value, float(value.gradient[0]), float(value.gradient[1])])
    return rows


def _boundary_data(args: argparse.Namespace, domain: PolygonalDomain) -> BoundaryData:
    return BoundaryData.from_dict(_load_json(args.data, "boundary data"), domain)


# --- commands ---


def cmd_whitney(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    domain = _load_domain(config.domain_path)
    dec = _decompose(domain, config, args.flavor)
    table = anchors(dec, domain)
    audit = check_invariants(dec, domain)
    if not audit.ok:
        logger.warning(f"Decomposition invariants violated: {audit}")
    emit_report(cube_rows(dec, table), args.out, format="csv", fieldnames=CUBE_FIELDS)
    summary = {
        "cubes": len(dec.cubes),
        "flavor": dec.flavor,
        "max_neighbors": dec.stats.max_neighbors,
        "skirt_fraction": dec.stats.skirt_fraction,
        "invariants_ok": audit.ok,
    }
    logger.info(f"Whitney decomposition: {summary}")
    return summary


def cmd_metric(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    domain = _load_domain(config.domain_path)
    d = intrinsic_distance(domain, args.source, args.target)
    summary = {
        "from": [format_exact(args.source.x), format_exact(args.source.y)],
        "to": [format_exact(args.target.x), format_exact(args.target.y)],
        "distance": d,
    }
    if args.out:
        emit_report(summary, args.out)
    print(f"d = {float(d):.12g}")
    return summary


def cmd_boundary(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    domain = _load_domain(config.domain_path)
    samples = sample_boundary(domain, args.samples)
    if args.action == "access":
        reports = accessibility_scan(domain, samples, args.bound)
        rows = [
            {"anchor": list(r.sample.point), "carrier": r.sample.carrier, "status": r.status, "distance": r.distance}
            for r in reports
        ]
        emit_report(rows, args.out)
        return {"samples": len(rows), "suspected": sum(r["status"] != "accessible" for r in rows)}
    rows = []
    for sample in samples:
        for e in split_elements_at(domain, sample):
            rows.append(
                {
                    "anchor": list(e.anchor.point),
                    "carrier": e.anchor.carrier,
                    "witness": list(e.witness),
                    "sector": [e.theta0, e.theta1],
                    "key": e.key,
                }
            )
    emit_report(rows, args.out)
    return {"samples": len(samples), "elements": len(rows)}


def cmd_extend(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    domain = _load_domain(config.domain_path)
    if args.jet:
        dec = _decompose(domain, config)
        table = anchors(dec, domain)
        jet = BoundaryJet.from_dict(_load_json(args.jet, "jet"))
        compat = check_jet_compat(jet, dec, table)
        F = whitney_extend(dec, table, jet)
        seminorm = seminorm_estimate(F).value
        report = PipelineReport(
            command="extend",
            depth=config.depth,
            cubes=len(dec.cubes),
            eta_min=compat.min_eta,
            seminorm_out=seminorm,
            gamma_extension=seminorm / max(compat.min_eta, 1e-12),
        )
    elif args.data:
        F, report = extend_from_boundary(
            domain,
            _boundary_data(args, domain),
            config.depth,
            max_skirt_fraction=config.max_skirt_fraction,
            seed=config.seed,
            consistency_tol=config.tolerances.consistency,
            probe_tol=config.tolerances.probe,
            record_timings=config.record_timings,
        )
    else:
        raise DomainFileError("extend needs --jet or --data")
    document = report.model_dump()
    document["grid"] = _grid_values(F, domain, args.eval_grid) if args.eval_grid else []
    emit_report(document, args.out)
    return report.model_dump(include={"cubes", "eta_min", "seminorm_out", "gamma_extension"})


def cmd_select(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    graph, constraints, n = graph_from_dict(_load_json(args.graph, "graph"))
    sel = lipschitz_selection(graph, constraints, mode=args.mode, lam=args.lam, dimension=n)
    residual = max((c.residual(sel.values[i]) for i, c in enumerate(constraints)), default=0.0)
    document = {
        "mode": args.mode,
        "lambda": sel.lam,
        "seminorm": sel.seminorm,
        "values": sel.values,
        "pinned": list(sel.pinned),
        "components": sel.components,
        "max_residual": residual,
    }
    emit_report(document, args.out)
    return {"lambda": sel.lam, "seminorm": sel.seminorm, "components": sel.components}


def cmd_check_fp(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    domain = _load_domain(config.domain_path)
    data = _boundary_data(args, domain)
    options = dict(
        budget=config.budget,
        seed=config.seed,
        workers=config.workers,
        max_skirt_fraction=config.max_skirt_fraction,
        consistency_tol=config.tolerances.consistency,
        lp_tol=config.tolerances.lp,
        equiv_tol=config.tolerances.equiv,
        record_timings=config.record_timings,
    )
    if args.visible:
        report = visible_subset_check(domain, data, config.depth, alpha=config.alpha, **options)
    else:
        report = check_finiteness(domain, data, config.depth, **options)
    emit_report(report, args.report)
    return report.model_dump(
        include={"status", "lambda_full", "lambda_subset_max", "gamma_hat", "subsets", "alpha_hat", "seed"}
    )


def cmd_render(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
    domain = _load_domain(config.domain_path)
    try:
        spec = RenderSpec(layers=args.layers, resolution=args.resolution, heatmap_cells=args.cells)
    except ValidationError as e:
        raise ConfigError(f"invalid render options: {e}") from e
    artifacts: Dict[str, Any] = {}
    if {"cubes", "anchors", "pair-graph"} & set(spec.layers):
        dec = _decompose(domain, config, args.flavor)
        artifacts["dec"] = dec
        if "anchors" in spec.layers:
            artifacts["table"] = anchors(dec, domain)
        if "pair-graph" in spec.layers:
            artifacts["graph"] = build_pair_graph(dec)
    if "field-heatmap" in spec.layers:
        if args.data:
            artifacts["field"], _ = extend_from_boundary(
                domain, _boundary_data(args, domain), config.depth, max_skirt_fraction=config.max_skirt_fraction,
                seed=config.seed, probes=0,
            )
        elif args.field:
            artifacts["field"] = synthesize_test_field(domain, args.field)
    if "split-elements" in spec.layers:
        points = [s.point for s in sample_boundary(domain, args.samples)] + list(domain.vertices)
        artifacts["elements"] = [e for p in points for e in split_elements_at(domain, p)]
    svg = render_svg(domain, spec, **artifacts)
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as f:
            f.write(svg)
    except OSError as e:
        raise ReportIOError(f"cannot write {args.out}: {e}") from e
    logger.info(f"Wrote {args.out}")
    return {"layers": spec.layers, "resolution": spec.resolution}


COMMAND_HANDLERS = {
    "whitney": cmd_whitney,
    "metric": cmd_metric,
    "boundary": cmd_boundary,
    "extend": cmd_extend,
    "select": cmd_select,
    "check-fp": cmd_check_fp,
    "render": cmd_render,
}


# --- parser ---


def _common(parser: argparse.ArgumentParser, domain: bool = True, depth: bool = False) -> None:
    if domain:
        parser.add_argument("--domain", dest="domain_path", help="Domain JSON file or fixture name")
    if depth:
        parser.add_argument("--depth", type=int, help="Decomposition depth limit")
    parser.add_argument("--seed", type=int, help="Random seed (overrides WHITNEY_SEED)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whitney-trace", description="C2 boundary values on planar domains")
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--log-level", default=None, help="Logging level (default WHITNEY_LOG_LEVEL or INFO)")
    parser.add_argument("--store", help="JSON file collecting one summary per command")
    parser.add_argument("--skirt", dest="max_skirt_fraction", type=float, help="Largest admissible skirt fraction")
    parser.add_argument("--timings", dest="record_timings", action="store_const", const=True,
                        help="Record stage timings in reports")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("whitney", help="Whitney decomposition")
    p.add_argument("action", choices=["decompose"])
    _common(p, depth=True)
    p.add_argument("--flavor", choices=FLAVORS, default="standard")
    p.add_argument("--out", required=True, help="Cube CSV")

    p = commands.add_parser("metric", help="Intrinsic distance between interior points")
    p.add_argument("action", choices=["dist"])
    _common(p)
    p.add_argument("--from", dest="source", type=_parse_xy, required=True)
    p.add_argument("--to", dest="target", type=_parse_xy, required=True)
    p.add_argument("--out")

    p = commands.add_parser("boundary", help="Split elements or accessibility at sampled boundary points")
    p.add_argument("action", choices=["split", "access"])
    _common(p)
    p.add_argument("--samples", type=int, default=32)
    p.add_argument("--bound", type=float, default=10.0, help="Path-length bound for access")
    p.add_argument("--out", required=True)

    p = commands.add_parser("extend", help="Whitney-type extension from a jet or boundary data")
    _common(p, depth=True)
    p.add_argument("--jet", help="Jet JSON with f, g and eta per cube")
    p.add_argument("--data", help="Boundary data JSON")
    p.add_argument("--eval-grid", type=int, default=0, help="Evaluate F on an M x M grid")
    p.add_argument("--probe", type=float, help="Trace probe tolerance")
    p.add_argument("--out", required=True)

    p = commands.add_parser("select", help="Lipschitz selection on a graph file")
    _common(p, domain=False)
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=["min", "feas"], default="min")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--out", required=True)

    p = commands.add_parser("check-fp", help="Finiteness check over small subsets")
    _common(p, depth=True)
    p.add_argument("--data", required=True, help="Boundary data JSON")
    p.add_argument("--budget", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--visible", action="store_true", help="Restrict to visible triples on refined cubes")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lp", type=float, help="LP tolerance")
    p.add_argument("--equiv", type=float, help="Element equivalence tolerance")
    p.add_argument("--report", required=True)

    p = commands.add_parser("render", help="Layered SVG")
    _common(p, depth=True)
    p.add_argument("--layers", type=lambda s: [x for x in s.split(",") if x], default=["domain", "cubes"],
                   help=f"Comma-separated subset of {','.join(LAYERS)}")
    p.add_argument("--flavor", choices=FLAVORS, default="standard")
    p.add_argument("--resolution", type=int, default=800)
    p.add_argument("--cells", type=int, default=64, help="Heatmap cells per side")
    p.add_argument("--data", help="Boundary data JSON for the heatmap")
    p.add_argument("--field", choices=FIELD_KINDS, help="Closed-form field for the heatmap")
    p.add_argument("--samples", type=int, default=16, help="Boundary samples for split elements")
    p.add_argument("--out", required=True)
    return parser


CONFIG_KEYS = ("domain_path", "depth", "seed", "budget", "alpha", "workers", "probe", "lp", "equiv",
               "max_skirt_fraction", "record_timings")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.getenv("WHITNEY_LOG_LEVEL") or "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)

    try:
        cli = {key: getattr(args, key, None) for key in CONFIG_KEYS}
        cli["command"] = args.command
        config = load_config(cli, args.config)
        if args.command not in ("select",) and not config.domain_path:
            raise DomainFileError(f"{args.command} needs --domain")
        summary = COMMAND_HANDLERS[args.command](args, config)
        if args.store:
            ReportStore(args.store).set(args.command, summary)
    except TraceError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    if args.command == "check-fp" and summary.get("status") == "infeasible":
        logger.error("Full selection problem is infeasible")
        return EXIT_INFEASIBLE
    logger.info(f"{args.command} finished")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
