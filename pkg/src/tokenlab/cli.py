"""Command line entry point: run, validate and report on scenario files."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from tokenlab import scenario as sc

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_UNEXPECTED = 3


def _print_violations(violations: List[str]) -> None:
    for v in violations:
        print(f"error: {v}", file=sys.stderr)


def cmd_run(args) -> int:
    try:
        code, runner = sc.run_scenario(args.file, args.out, seed=args.seed)
    except sc.ScenarioError as exc:
        _print_violations(exc.violations)
        return EXIT_INVALID
    for r in runner.results:
        mark = "ok " if r.as_expected else "!! "
        print(f"{mark}step {r.step:>3} {r.action:<14} {r.outcome}")
    for r in runner.unexpected:
        print(f"unexpected: step {r.step} ({r.action}): expected {r.expect}, got {r.outcome}", file=sys.stderr)
    print(f"wrote {args.out}")
    return EXIT_UNEXPECTED if code else EXIT_OK


def cmd_validate(args) -> int:
    try:
        scenario = sc.load_scenario(args.file)
    except sc.ScenarioError as exc:
        _print_violations(exc.violations)
        return EXIT_INVALID
    print(f"valid: {scenario.get('name', args.file)} ({sc.mode_label(scenario)}, {len(scenario['script'])} steps)")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.dir)
    if not (out / "scenario.json").is_file() or not (out / "ledger.log").is_file():
        print(f"error: {out} is not a run directory", file=sys.stderr)
        return EXIT_INVALID
    reports = sc.emit_reports(out)
    print(json.dumps(reports, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tokenlab", description="Token-tracking protocol laboratory")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario and write ledger, transcripts and reports")
    run.add_argument("file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a scenario file without running it")
    val.add_argument("file")
    val.set_defaults(func=cmd_validate)

    rep = sub.add_parser("report", help="recompute analyses from a run directory")
    rep.add_argument("dir")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
