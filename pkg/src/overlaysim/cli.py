"""Command-line entry point: ``overlaysim run|sweep|validate``.

Exit status is 0 on success and 2 when the scenario file is invalid.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .harness import (
    ScenarioError,
    emit,
    load_scenario,
    run_scenario,
    sweep,
)

EXT = {"csv": "csv", "json": "json", "summary": "txt"}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _write(data: bytes, out: Path | None, stem: str, fmt: str) -> None:
    if out is None:
        sys.stdout.buffer.write(data)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.{EXT[fmt]}").write_bytes(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overlaysim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("--scenario", required=True, type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path, help="directory for report files (default: stdout)")
    run.add_argument("--format", choices=sorted(EXT), default="summary")

    sw = sub.add_parser("sweep", help="run a scenario once per value of one field")
    sw.add_argument("--scenario", required=True, type=Path)
    sw.add_argument("--axis", required=True)
    sw.add_argument("--values", required=True, help="comma-separated, e.g. wifi,cellular4g")
    sw.add_argument("--out", type=Path)
    sw.add_argument("--format", choices=sorted(EXT), default="summary")
    sw.add_argument("--workers", type=int, default=1)

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("--scenario", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        if args.command == "validate":
            print(f"{args.scenario}: ok")
            return 0
        if args.command == "run":
            if args.seed is not None:
                scenario = replace(scenario, seed=args.seed)
            report = run_scenario(scenario)
            _write(emit(report, args.format), args.out, "report", args.format)
            return 0
        values = [_parse_value(v) for v in args.values.split(",") if v != ""]
        reports = sweep(scenario, args.axis, values, workers=args.workers)
        for i, report in enumerate(reports):
            _write(emit(report, args.format), args.out, f"report-{i:03d}", args.format)
        return 0
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
