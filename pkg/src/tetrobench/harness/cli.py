"""Command-line entry point: ``tetrobench <stage> --config PATH``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .runner import run, stages_through

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

COMMANDS = {
    "generate": "build and store the datasets",
    "calibrate": "sweep alpha per scenario and record the chosen signal strength",
    "train": "train every (dataset, architecture, seed) model",
    "explain": "compute importance maps on the correctly-predicted intersection",
    "score": "score the stored maps against ground-truth masks",
    "report": "aggregate stored scores into summary.csv, report.json and boxplots.svg",
    "run": "all stages, in order",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tetrobench",
        description="Synthetic ground-truth benchmark for feature attribution methods.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="benchmark config (JSON)")
    common.add_argument("--out", help="output root; overrides output_root in the config")
    common.add_argument("--seed", type=int, help="global seed; overrides the config")
    common.add_argument("--workers", type=int, help="parallel worker processes")
    common.add_argument("--max-samples", type=int,
                        help="cap on explained samples per model")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, output_root=args.out, seed=args.seed,
                          workers=args.workers, max_samples=args.max_samples)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        stages = None
    elif args.command == "calibrate":
        stages = ["calibrate"]
    else:
        stages = stages_through(args.command)
    _, failures = run(cfg, stages)
    if failures:
        print(f"{len(failures)} cell(s) failed; see {cfg.output_root}/report/failures.json",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
