"""Command-line entry point: ``newsload <stage> [--config PATH] [--seed N] [--jobs N] [--out DIR]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .pipeline import STAGES, PipelineError, load_config, run_stage

HELP = {
    "synth": "write a synthetic fixture with a planted news effect",
    "features": "extract daily textual feature tables",
    "select": "bilateral Granger screening; writes the audit table",
    "train": "fit benchmark, single-family and combination models",
    "evaluate": "metrics, DM tests and error decompositions",
    "explain": "Pearson grids, LIME surrogates and Double ML effects",
    "report": "assemble the summary report",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsload", description="News-informed day-ahead demand forecasting pipeline.")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")
    for stage in STAGES:
        p = sub.add_parser(stage, help=HELP[stage])
        p.add_argument("--config", help="YAML config file (defaults apply to unset keys)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="worker threads; never changes results")
        p.add_argument("--out", default="newsload-out", help="artifact directory (default: %(default)s)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
        run_stage(args.stage, cfg, args.out, args.jobs)
    except (PipelineError, FileNotFoundError, ValueError) as exc:
        print(f"newsload {args.stage}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
