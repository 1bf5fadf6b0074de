"""Command line entry point: ``aui <experiment> --config cfg.json --out dir [--seed N]``."""

import argparse
import logging
import sys
from dataclasses import replace

from . import harness
from .config import load_config
from .errors import AuiError

COMMANDS = {
    "pretrain": harness.run_pretrain,
    "error-analysis": harness.run_error_analysis,
    "sweep": harness.run_sweep,
    "online": harness.run_online,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="aui", description="Skip-replanning experiments for model-based control.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="base seed (overrides seed)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(out=args.out, seed=args.seed)
        # the subcommand decides which experiment runs
        cfg = replace(cfg, experiment=args.command)
        COMMANDS[args.command](cfg)
    except (AuiError, ValueError) as exc:
        print(f"aui: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote results to {cfg.output_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
