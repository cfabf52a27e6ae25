"""Command line entry point: ``popeb <experiment> --config <path> [--out DIR] [--seed N]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import EXPERIMENTS, ConfigError, ExperimentConfig
from .experiments import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="popeb", description="Run a bootstrap empirical Bayes experiment.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="key = value file overriding the defaults")
    p.add_argument("--out", help="output directory (default: results)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = ExperimentConfig.load(args.experiment, args.config, args.out, args.seed)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"popeb: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())
