"""Command-line interface: design tables, performance sweeps, ingestion, serving.

Flags mirror the parameter-file keys one-to-one; ``--params FILE`` loads a
saved parameter file and any explicit flags override its values.  Exit codes:
0 success, 2 invalid parameters or dataset, 3 time limit exceeded.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, Optional

from .boundaries import calibrate_all
from .configio import (
    PARAMETER_KEYS,
    _INT_KEYS,
    export_design_table,
    export_performance_table,
    load_parameters,
    parse_parameter_mapping,
    parameters_to_mapping,
    save_parameters,
)
from .errors import CalibrationError, DatasetError, TimeLimitError, ValidationError
from .ingest import estimate_population, parse_dataset
from .model import DesignKind, build_schedule
from .report import render_report
from .simulate import FUTILITY_MODES, estimate_performance

_TABLE_FILES = {
    DesignKind.ADAPTIVE: "design_ad.csv",
    DesignKind.STANDARD_COMBINED: "design_sc.csv",
    DesignKind.STANDARD_SUBPOP1: "design_ss.csv",
}


def _add_parameter_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--params", metavar="FILE",
                        help="parameter file to load (flags override its values)")
    group = parser.add_argument_group("parameters (override file/defaults)")
    for key in PARAMETER_KEYS:
        if key == "format_version":
            continue
        flag = "--" + key.replace("_", "-")
        kind = int if key in _INT_KEYS else float
        group.add_argument(flag, dest=key, type=kind, default=None, metavar="X")


def _collect_parameters(args: argparse.Namespace):
    values: Dict[str, object] = {}
    if args.params:
        spec, pop, mc, warnings = load_parameters(Path(args.params).read_text())
        values.update(parameters_to_mapping(spec, pop, mc))
        for message in warnings:
            print(f"warning: {message}", file=sys.stderr)
    for key in PARAMETER_KEYS:
        if key == "format_version":
            continue
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    spec, pop, mc, warnings = parse_parameter_mapping(values)
    for message in warnings:
        print(f"warning: {message}", file=sys.stderr)
    return spec, pop, mc


def _write_or_print(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_design(args) -> int:
    spec, pop, mc = _collect_parameters(args)
    tables = calibrate_all(spec, pop, mc)
    schedules = {kind: build_schedule(spec, pop, kind) for kind in DesignKind}
    if args.save_params:
        Path(args.save_params).write_text(save_parameters(spec, pop, mc))
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        for kind, name in _TABLE_FILES.items():
            (out / name).write_text(export_design_table(tables[kind], schedules[kind]))
        if args.report:
            (out / "report.html").write_text(render_report(
                tables, schedules, parameters=parameters_to_mapping(spec, pop, mc)))
    else:
        for kind, name in _TABLE_FILES.items():
            sys.stdout.write(f"== {name[:-4]} ==\n")
            sys.stdout.write(export_design_table(tables[kind], schedules[kind]))
    return 0


def _cmd_simulate(args) -> int:
    spec, pop, mc = _collect_parameters(args)
    tables = calibrate_all(spec, pop, mc)
    grid = estimate_performance(spec, pop, tables, mc, futility=args.futility)
    _write_or_print(export_performance_table(grid), args.output)
    if args.report:
        schedules = {kind: build_schedule(spec, pop, kind) for kind in DesignKind}
        Path(args.report).write_text(render_report(
            tables, schedules, grid, parameters=parameters_to_mapping(spec, pop, mc)))
    return 0


def _cmd_ingest(args) -> int:
    records = parse_dataset(Path(args.dataset).read_bytes())
    estimate = estimate_population(records)
    for message in estimate.warnings:
        print(f"warning: {message}", file=sys.stderr)
    rows = [("pi1", estimate.params.pi1), ("p1c", estimate.params.p1c),
            ("p1t", estimate.params.p1t), ("p2c", estimate.params.p2c),
            ("p2t", estimate.p2t)]
    for key, value in rows:
        print(f"{key},{value!r}")
    if args.merge_into:
        path = Path(args.merge_into)
        if path.exists():
            spec, pop, mc, _ = load_parameters(path.read_text())
        else:
            spec, pop, mc, _ = parse_parameter_mapping({})
        pop = estimate.params
        path.write_text(save_parameters(spec, pop, mc))
        print(f"updated {path}", file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceSettings, create_app

    app = create_app(ServiceSettings(
        workers=args.workers,
        cache_capacity=args.cache_size,
        time_limit_max_s=args.time_limit_max,
        assets_dir=args.assets_dir,
    ))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="enrichplan",
        description="Plan two-subpopulation trials: adaptive enrichment vs "
                    "standard group sequential designs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_design = sub.add_parser("design", help="calibrate and export boundary tables")
    _add_parameter_flags(p_design)
    p_design.add_argument("--output", metavar="DIR",
                          help="directory for design_{ad,sc,ss}.csv (default: stdout)")
    p_design.add_argument("--report", action="store_true",
                          help="also write report.html into --output")
    p_design.add_argument("--save-params", metavar="FILE",
                          help="write the effective parameters to FILE")
    p_design.set_defaults(handler=_cmd_design)

    p_sim = sub.add_parser("simulate", help="estimate power, sample size, duration")
    _add_parameter_flags(p_sim)
    p_sim.add_argument("--output", metavar="FILE",
                       help="write the performance table to FILE (default: stdout)")
    p_sim.add_argument("--report", metavar="FILE", help="also write an HTML report")
    p_sim.add_argument("--futility", choices=FUTILITY_MODES, default="enforced",
                       help="enforce or ignore futility boundaries (default: enforced)")
    p_sim.set_defaults(handler=_cmd_simulate)

    p_ingest = sub.add_parser("ingest", help="estimate parameters from a dataset")
    p_ingest.add_argument("dataset", help="CSV file: subpopulation,treatment,outcome")
    p_ingest.add_argument("--merge-into", metavar="FILE",
                          help="update (or create) a parameter file with the estimates")
    p_ingest.set_defaults(handler=_cmd_ingest)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--workers", type=int, default=2,
                         help="size of the computation worker pool")
    p_serve.add_argument("--cache-size", type=int, default=64,
                         help="number of finished jobs kept for export")
    p_serve.add_argument("--time-limit-max", type=float, default=90.0,
                         help="hard cap on per-request simulation time (seconds)")
    p_serve.add_argument("--assets-dir", default=None,
                         help="directory of static UI assets to serve at /")
    p_serve.set_defaults(handler=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ValidationError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TimeLimitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
