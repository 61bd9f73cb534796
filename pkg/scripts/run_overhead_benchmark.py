#!/usr/bin/env python3
"""Run the interpreter-overhead experiment and print a small summary.

Sweeps per-operation compute time {0,5,10,20}ms against activation periods
{15..960}ms for both the interpreter and the hard-coded baseline, then
reports mean CPU per combination and the interpreter overhead in
percentage points.  Writes the full CSV next to the summary.

    python scripts/run_overhead_benchmark.py [--duration 10] [--out overhead.csv]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from megaloop.bench import BenchConfig, run_benchmark  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--duration", type=float, default=10.0,
                        help="seconds per combination and mode")
    parser.add_argument("--out", default="overhead.csv")
    parser.add_argument("--pacing", choices=("spin", "sleep"), default="spin")
    args = parser.parse_args()

    config = BenchConfig(duration_s=args.duration, pacing=args.pacing)
    report = run_benchmark(config, progress=lambda label: print("...", label))
    Path(args.out).write_text(report.to_csv(), encoding="utf-8")

    print(f"\n{'combo':>14} {'baseline%':>10} {'interp%':>10} {'overhead pp':>12}")
    for compute in config.compute_ms_values:
        for period in config.period_ms_values:
            interp = report.result(compute, period, "interpreter")
            if interp is None:
                continue
            base = report.result(compute, period, "baseline")
            print(f"c{compute}ms-p{period}ms".rjust(14),
                  f"{base.mean_cpu_pct:10.3f}", f"{interp.mean_cpu_pct:10.3f}",
                  f"{report.overhead_pp(compute, period):+12.3f}")
    skipped = ", ".join(f"c{c}ms-p{p}ms" for c, p, _ in report.infeasible)
    print(f"\ninfeasible (not run): {skipped}")
    print(f"CSV written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
