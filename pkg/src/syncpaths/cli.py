"""Command-line entry point.

Exit codes: 0 success, 2 configuration or validation error, 3 numeric
failure, 4 I/O failure. Every failure prints one ``syncpaths: error: <kind>:
<reason>`` line on stderr.
"""
from __future__ import annotations

import argparse
import os
import sys

from .closed_loop import simulate
from .lti import NumericFailure
from .metrics import comparison_metrics, format_report
from .scenario import BUILTIN_NAMES, ScenarioError, builtin_example, load_scenario
from .traceio import emit_trace_csv, read_trace_csv, write_atomic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ArgError(message)


def _resolve(source: str):
    """Return ``(name, scenario)`` for ``builtin:NAME`` or a scenario file."""
    if source.startswith("builtin:"):
        name = source[len("builtin:"):]
        return name, builtin_example(name)
    try:
        scenario = load_scenario(source)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    stem = os.path.splitext(os.path.basename(source))[0]
    return stem, scenario


def _outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _cmd_run(args) -> int:
    name, scenario = _resolve(args.scenario)
    if args.no_sync:
        scenario = scenario.without_sync()
    trace = simulate(scenario)
    suffix = "_nosync" if args.no_sync else ""
    dest = os.path.join(_outdir(args.out), f"{name}{suffix}.csv")
    emit_trace_csv(trace, dest)
    print(dest)
    return EXIT_OK


def _compare(source: str, out: str, window: float, band: float) -> list[str]:
    name, scenario = _resolve(source)
    sync = simulate(scenario)
    nosync = simulate(scenario.without_sync())
    out = _outdir(out)
    paths = [
        os.path.join(out, f"{name}_sync.csv"),
        os.path.join(out, f"{name}_nosync.csv"),
        os.path.join(out, f"{name}_metrics.txt"),
    ]
    emit_trace_csv(sync, paths[0])
    emit_trace_csv(nosync, paths[1])
    report = comparison_metrics(scenario, {"sync": sync, "nosync": nosync}, window, band)
    write_atomic(paths[2], format_report(f"{name}: sync on vs sync off", report))
    return paths


def _cmd_compare(args) -> int:
    for p in _compare(args.scenario, args.out, args.window, args.band):
        print(p)
    return EXIT_OK


def _cmd_demo(args) -> int:
    paths = _compare(f"builtin:{args.name}", args.out, args.window, args.band)
    with open(paths[2], encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                print(line.rstrip())
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    _, scenario = _resolve(args.scenario)
    try:
        trace = read_trace_csv(args.trace)
    except ValueError as exc:
        raise ScenarioError(f"{args.trace}: malformed trace: {exc}") from None
    report = format_report(
        os.path.basename(args.trace),
        comparison_metrics(scenario, {"trace": trace}, args.window, args.band),
    )
    if args.out:
        write_atomic(args.out, report)
    else:
        sys.stdout.write(report)
    return EXIT_OK


def _cmd_validate(args) -> int:
    _resolve(args.scenario)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="syncpaths", description="Synced parallel control paths simulator")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    src_help = "scenario file or builtin:NAME (" + ", ".join(BUILTIN_NAMES) + ")"

    def metric_opts(p):
        p.add_argument("--window", type=float, default=5.0, help="post-switch window in seconds")
        p.add_argument("--band", type=float, default=0.02, help="settling band as a fraction of the reference")

    p = sub.add_parser("run", help="simulate one scenario and write its trace")
    p.add_argument("scenario", help=src_help)
    p.add_argument("--no-sync", action="store_true", help="disable the sync loops (u = u_bar = 0)")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="paired sync/no-sync runs plus metrics report")
    p.add_argument("scenario", help=src_help)
    p.add_argument("--out", default=".", help="output directory")
    metric_opts(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("metrics", help="score an existing trace CSV")
    p.add_argument("trace")
    p.add_argument("--scenario", required=True, help=src_help)
    p.add_argument("--out", default=None, help="report file (stdout when omitted)")
    metric_opts(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario", help=src_help)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("demo", help="compare one of the built-in examples")
    p.add_argument("name", choices=BUILTIN_NAMES)
    p.add_argument("--out", default=".", help="output directory")
    metric_opts(p)
    p.set_defaults(func=_cmd_demo)
    return parser


def _fail(kind: str, msg: str, code: int) -> int:
    print(f"syncpaths: error: {kind}: {' '.join(str(msg).split())}", file=sys.stderr)
    return code


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except _ArgError as exc:
        return _fail("usage", exc, EXIT_CONFIG)
    except NumericFailure as exc:
        return _fail("numeric", exc, EXIT_NUMERIC)
    except ScenarioError as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except OSError as exc:
        return _fail("io", exc, EXIT_IO)
    except ValueError as exc:
        return _fail("config", exc, EXIT_CONFIG)


def main() -> None:
    sys.exit(run_cli())
