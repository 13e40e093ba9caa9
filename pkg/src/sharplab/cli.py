"""Command-line front end: run specs, emit plot data, summarize artifacts.

Exit codes: 0 success, 2 validation error, 3 at least one diverged run,
4 internal error.  SHARPLAB_PARALLEL overrides sweep-cell parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness


def _cmd_run(args) -> int:
    artifacts = harness.run_experiment(args.spec, args.output_dir)
    for art in artifacts:
        status = "diverged" if art.diverged else "ok"
        print(f"{art.directory}  [{status}]")
    return harness.EXIT_DIVERGED if any(a.diverged for a in artifacts) else harness.EXIT_OK


def _cmd_plotdata(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    text = harness.emit_plotdata(args.run_dir, metrics, args.normalize)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return harness.EXIT_OK


def _cmd_summarize(args) -> int:
    summary = harness.summarize(args.run_dir)
    out = Path(args.run_dir) / "summary.json"
    with open(out, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    json.dump(summary, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return harness.EXIT_DIVERGED if summary.get("diverged") else harness.EXIT_OK


def _cmd_scan_gaps(args) -> int:
    directory = harness.run_gap_scan(args.spec, args.output_dir)
    print(directory)
    return harness.EXIT_OK


def _cmd_classify(args) -> int:
    if (args.eta_factor is None) == (args.new_b is None):
        print("classify: set exactly one of --eta-factor or --new-b", file=sys.stderr)
        return harness.EXIT_VALIDATION
    verdict = harness.classify_run(
        args.run_dir,
        eta_factor=args.eta_factor,
        new_b=args.new_b,
        probe_steps=args.probe_steps,
        baseline_steps=args.baseline_steps,
        catapult_factor=args.catapult_factor,
    )
    json.dump(verdict, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")
    return harness.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sharplab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every sweep cell of a spec")
    p.add_argument("spec")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("plotdata", help="emit long-format plot CSV from a run")
    p.add_argument("run_dir")
    p.add_argument("--metrics", required=True, help="comma-separated metric names")
    p.add_argument("--normalize", action="store_true",
                   help="divide values by the 2/eta in effect at each step")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_plotdata)

    p = sub.add_parser("summarize", help="recompute summary.json for a run")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("scan-gaps", help="batch-size gap scan per a spec's scan section")
    p.add_argument("spec")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_scan_gaps)

    p = sub.add_parser("classify", help="probe a finished run's oscillation type")
    p.add_argument("run_dir")
    p.add_argument("--eta-factor", type=float, default=None)
    p.add_argument("--new-b", type=int, default=None)
    p.add_argument("--probe-steps", type=int, default=100)
    p.add_argument("--baseline-steps", type=int, default=60)
    p.add_argument("--catapult-factor", type=float, default=3.0)
    p.set_defaults(func=_cmd_classify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except harness.SpecValidationError as err:
        print(f"validation error: {err}", file=sys.stderr)
        return harness.EXIT_VALIDATION
    except FileNotFoundError as err:
        print(f"not found: {err}", file=sys.stderr)
        return harness.EXIT_VALIDATION
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {err}", file=sys.stderr)
        return harness.EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
