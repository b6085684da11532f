"""Command-line front end.

Subcommands:

    run        execute a scenario file, one bundle directory per arm
    summarize  latency statistics for a records.csv or bundle directory
    compare    deltas between two bundles (percent, and percentage points
               for the violation rate)
    plotdata   CSV series for plotting (cdf, phase-bars, sweep)
    kernels    benchmark the compiled kernels against the NumPy fallback

The output root is --out-dir, else $DAPP_BENCH_OUT, else ./results.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import kernels
from .experiment import META_JSON, load_bundle_records, load_meta, load_records, run_experiment
from .kernelbench import format_csv, format_table, run_benchmark
from .scenario import load_scenario
from .stats import MS, UnknownKind, emit_plot_data, summarize

OUT_ENV = "DAPP_BENCH_OUT"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dappbench",
        description="Closed-loop dApp latency bench: run scenarios, summarize and "
        "compare result bundles, emit plot data, benchmark kernel backends. "
        "Output root: --out-dir, else $DAPP_BENCH_OUT, else ./results.",
    )
    sub = parser.add_subparsers(required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("scenario", type=Path)
    p_run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_run.add_argument("--out-dir", type=Path, default=None)
    p_run.add_argument("--no-resources", action="store_true", help="skip CPU sampling")
    p_run.set_defaults(func=cmd_run)

    p_sum = sub.add_parser("summarize", help="summarize a records.csv or bundle")
    p_sum.add_argument("records", type=Path)
    p_sum.set_defaults(func=cmd_summarize)

    p_cmp = sub.add_parser("compare", help="compare two bundles (B relative to A)")
    p_cmp.add_argument("bundle_a", type=Path)
    p_cmp.add_argument("bundle_b", type=Path)
    p_cmp.set_defaults(func=cmd_compare)

    p_plot = sub.add_parser("plotdata", help="emit plot CSV from a bundle")
    p_plot.add_argument("bundle", type=Path)
    p_plot.add_argument("--kind", required=True, choices=("cdf", "phase-bars", "sweep"))
    p_plot.add_argument("--out", type=Path, default=None, help="write to file instead of stdout")
    p_plot.set_defaults(func=cmd_plotdata)

    p_k = sub.add_parser("kernels", help="benchmark kernel backends")
    p_k.add_argument("--csv", type=Path, default=None, help="also write CSV output here")
    p_k.add_argument("--scale", type=float, default=1.0, help="scale the repeat counts")
    p_k.set_defaults(func=cmd_kernels)
    return parser


def _out_root(arg: Path | None) -> Path:
    if arg is not None:
        return arg
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path("results")


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(
            scenario, seed=args.seed, workload=replace(scenario.workload, model_seed=args.seed)
        )
    out_root = _out_root(args.out_dir)
    print(f"scenario {scenario.name} (seed {scenario.seed}, kernels: {kernels.BACKEND})")
    bundles = run_experiment(scenario, out_root, collect_resources=not args.no_resources)
    for bundle in bundles:
        records = load_bundle_records(bundle)
        if records:
            s = summarize(records)
            line = (
                f"{s.count} records, mean {s.mean_ns / MS:.3f} ms, p95 {s.p95_ns / MS:.3f} ms, "
                f"violations {s.violation_rate:.1%}"
            )
        else:
            line = "no records"
        print(f"  {bundle}: {line}")
    return 0


def _records_arg(path: Path):
    if path.is_dir():
        return load_bundle_records(path)
    return load_records(path)


def cmd_summarize(args) -> int:
    s = summarize(_records_arg(args.records))
    m = s.phase_means
    print(f"count            {s.count}")
    print(f"mean             {s.mean_ns / MS:.3f} ms")
    print(f"p50 / p95 / p99  {s.p50_ns / MS:.3f} / {s.p95_ns / MS:.3f} / {s.p99_ns / MS:.3f} ms")
    print(f"max              {s.max_ns / MS:.3f} ms")
    print(f"violation rate   {s.violation_rate:.1%}")
    print(
        "phase means      "
        f"P1 {m.p1_ns / MS:.3f} | P2 {m.p2_ns / MS:.3f} | P3 {m.p3_ns / MS:.3f} | "
        f"P4 {m.p4_ns / MS:.3f} | rtt {m.rtt_ns / MS:.3f} ms"
    )
    return 0


def cmd_compare(args) -> int:
    from .stats import compare

    deltas = compare(_records_arg(args.bundle_a), _records_arg(args.bundle_b))
    print(f"mean       {deltas.mean_pct:+.1f}%")
    print(f"p95        {deltas.p95_pct:+.1f}%")
    print(f"max        {deltas.max_pct:+.1f}%")
    print(f"violations {deltas.violation_pp:+.1f} pp")
    return 0


def cmd_plotdata(args) -> int:
    bundle: Path = args.bundle
    if args.kind == "sweep":
        arms = []
        for child in sorted(bundle.iterdir()) if bundle.is_dir() else []:
            if (child / META_JSON).exists():
                meta = load_meta(child)
                arms.append((meta["arm"], float(meta.get("x", 0.0)), load_bundle_records(child)))
        if not arms:
            raise ValueError(f"{bundle} holds no arm bundles")
        csv_text = emit_plot_data("sweep", arms=arms)
    else:
        try:
            csv_text = emit_plot_data(args.kind, records=_records_arg(bundle))
        except UnknownKind as exc:  # argparse choices make this unreachable
            raise ValueError(str(exc)) from None
    if args.out is not None:
        args.out.write_text(csv_text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_kernels(args) -> int:
    rows = run_benchmark(scale=args.scale)
    print(format_table(rows))
    if args.csv is not None:
        args.csv.write_text(format_csv(rows), encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
