"""Command-line front end: simulate scenarios, build reports, run benchmarks.

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, EmptyReportError, InsufficientDataError, ValleycutError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_INTERNAL = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="valleycut", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario manifest")
    sim.add_argument("--config", required=True, help="manifest JSON path")
    sim.add_argument("--seeds", default=None, help="comma-separated seed list override")
    sim.add_argument("--out", required=True, help="output directory")

    rep = sub.add_parser("report", help="aggregate a simulation directory")
    rep.add_argument("--in", dest="in_dir", required=True, help="simulate output directory")
    rep.add_argument("--out", required=True, help="report output directory")

    ben = sub.add_parser("bench", help="profile per-event update cost vs grid size")
    ben.add_argument("--grids", default="128,512,2048", help="comma-separated grid sizes")
    ben.add_argument("--events", type=int, default=20000, help="events per grid size")
    ben.add_argument(
        "--backends",
        default=None,
        help="comma-separated backends to compare (numba,numpy); default: active",
    )
    ben.add_argument("--repeats", type=int, default=5)
    return p


def cmd_simulate(args) -> int:
    from .runner import manifest_from_dict, simulate

    cfg_path = Path(args.config)
    if not cfg_path.exists():
        print(f"error: config file not found: {cfg_path}", file=sys.stderr)
        return EXIT_MISSING
    try:
        data = json.loads(cfg_path.read_text())
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = manifest_from_dict(data, out_dir=args.out)
        if args.seeds:
            from dataclasses import replace

            manifest = replace(
                manifest, seeds=tuple(int(s) for s in args.seeds.split(","))
            )
        out = simulate(manifest)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote simulation outputs to {out} (scenario={manifest.scenario_hash()})")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import write_report

    in_dir = Path(args.in_dir)
    if not in_dir.exists():
        print(f"error: input directory not found: {in_dir}", file=sys.stderr)
        return EXIT_MISSING
    try:
        write_report(in_dir, Path(args.out))
    except EmptyReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    print(f"wrote report to {args.out}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import format_bench, run_bench

    try:
        grids = [int(g) for g in args.grids.split(",") if g]
        backends = args.backends.split(",") if args.backends else None
        results = run_bench(grids, args.events, backends=backends, repeats=args.repeats)
    except (ConfigError, InsufficientDataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_bench(results))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "report":
            return cmd_report(args)
        if args.command == "bench":
            return cmd_bench(args)
    except ValleycutError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
