"""Command-line entry points.

    megaloop validate <files...>           parse + check, exit 0/1
    megaloop run <scenario.ld> --fld-dir D --script S [--virtual-clock]
                 [--duration N] [--trace-file F]
    megaloop bench [--out report.csv] [--duration N] [...]

While `run` is active, ENGINE_CONTROL_ADDR selects a control channel
(`stdin`, `unix:<path>`, or `tcp:<host>:<port>`).  Exit codes: 0 ok,
1 validation failure, 2 runtime error, 3 control-protocol error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import control, dsl
from .bench import BenchConfig, run_benchmark
from .clock import MonotonicClock, VirtualClock
from .diagnostics import Diagnostic, has_errors
from .loader import LoadError, build_engine
from .model import check_architecture
from .reflection import parse_patch
from .runtime import EngineError, TraceEntry
from .scenario import parse_script

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CONTROL = 3


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="megaloop",
                                     description="Feedback-loop megamodel engine")
    sub = parser.add_subparsers(dest="command", required=True)

    validate = sub.add_parser("validate", help="parse and check fixture files")
    validate.add_argument("files", nargs="*", help=".fld/.ld/.patch/.script files")

    run = sub.add_parser("run", help="load an architecture and execute a scenario")
    run.add_argument("architecture", help="the .ld file to load")
    run.add_argument("--fld-dir", required=True, help="directory with .fld files")
    run.add_argument("--script", help="scenario script file")
    run.add_argument("--virtual-clock", action="store_true",
                     help="deterministic virtual time instead of wall time")
    run.add_argument("--duration", type=float, help="seconds to run")
    run.add_argument("--trace-file", help="write the trace log here instead of stdout")

    bench = sub.add_parser("bench", help="interpreter-overhead benchmark")
    bench.add_argument("--out", help="write the CSV report here (default stdout)")
    bench.add_argument("--duration", type=float, default=10.0,
                       help="seconds per combination and mode")
    bench.add_argument("--computes", default="0,5,10,20",
                       help="per-operation compute times in ms")
    bench.add_argument("--periods", default="15,30,60,120,240,480,960",
                       help="activation periods in ms")
    bench.add_argument("--anchor", choices=("start", "end"), default="start")

    args = parser.parse_args(argv)
    if args.command == "validate":
        return _cmd_validate(args)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_bench(args)


def _print_diags(diags: list[Diagnostic]) -> None:
    for diag in diags:
        print(str(diag), file=sys.stderr)


def _cmd_validate(args) -> int:
    if not args.files:
        print("usage error: no files to validate", file=sys.stderr)
        return EXIT_VALIDATION
    registry = {}
    architectures = []
    failed = False
    for name in args.files:
        path = Path(name)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            print(f"{name}: error E-SYNTAX: {exc}", file=sys.stderr)
            failed = True
            continue
        if path.suffix == ".fld":
            result = dsl.parse_fld(text, name)
            if result.ok:
                registry[result.value.name] = result.value
        elif path.suffix == ".ld":
            result = dsl.parse_ld(text, name)
            if result.ok:
                architectures.append(result.value)
        elif path.suffix == ".patch":
            result = parse_patch(text, name)
        elif path.suffix == ".script":
            result = parse_script(text, name)
        else:
            print(f"{name}: error E-SYNTAX: unknown file type", file=sys.stderr)
            failed = True
            continue
        if not result.ok:
            _print_diags(result.diagnostics)
            failed = True
    for arch in architectures:
        diags = check_architecture(arch, registry)
        if has_errors(diags):
            _print_diags(diags)
            failed = True
    if failed:
        return EXIT_VALIDATION
    print(f"ok: {len(args.files)} file(s) validated")
    return EXIT_OK


def _cmd_run(args) -> int:
    trace_out = None
    if args.trace_file:
        trace_out = open(args.trace_file, "w", encoding="utf-8")
    control_addr = os.environ.get(control.ADDR_ENV)
    sink_file = trace_out
    if sink_file is None:
        # control over stdio owns stdout; keep the trace readable on stderr
        sink_file = sys.stderr if control_addr == "stdin" else sys.stdout

    def sink(instance: str, entry: TraceEntry) -> None:
        detail = f" {entry.detail}" if entry.detail else ""
        print(f"t={entry.time:.3f}s {instance} {entry.kind} {entry.name}{detail}",
              file=sink_file)

    clock = VirtualClock() if args.virtual_clock else MonotonicClock()
    try:
        engine, script = build_engine(args.architecture, args.fld_dir,
                                      script=args.script, clock=clock, trace_sink=sink)
    except (LoadError, EngineError) as exc:
        diags = getattr(exc, "diagnostics", [])
        _print_diags(diags)
        if not diags:
            print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION

    server = None
    paced = False
    try:
        if control_addr == "stdin":
            import threading
            threading.Thread(target=control.serve_stdin, args=(engine,),
                             daemon=True).start()
            paced = args.virtual_clock
        elif control_addr:
            try:
                server = control.ControlServer(engine, control_addr)
                bound = server.start()
            except (OSError, ValueError) as exc:
                print(f"control: {exc}", file=sys.stderr)
                return EXIT_CONTROL
            print(f"control listening on {bound}", file=sys.stderr)
            paced = args.virtual_clock
        engine.run(duration=args.duration, script=script, paced=paced)
    except EngineError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if server is not None:
            server.close()
        if trace_out is not None:
            trace_out.close()
    if engine.errors:
        for err in engine.errors:
            print(str(err), file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_bench(args) -> int:
    config = BenchConfig(
        compute_ms_values=tuple(int(x) for x in args.computes.split(",") if x),
        period_ms_values=tuple(int(x) for x in args.periods.split(",") if x),
        duration_s=args.duration,
        period_anchor=args.anchor,
    )
    report = run_benchmark(config, progress=lambda label: print(label, file=sys.stderr))
    csv_text = report.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        print(csv_text, end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
