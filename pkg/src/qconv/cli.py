"""Command-line entry point: ``qconv <command> --config FILE --out DIR``."""

from __future__ import annotations

import argparse
import sys

from .errors import QconvError
from .experiments import COMMANDS, configure_logging, load_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qconv", description="Q-learning convergence lab")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int, help="run this seed only (overrides the config's seed list)")
    p.add_argument("--out", default="runs", help="output directory (default: runs)")
    p.add_argument("--parallel", type=int, help="worker processes for seed replicas")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        cfg = load_config(args.command, args.config, args.out, args.seed, args.parallel)
        manifest = run_experiment(cfg)
    except QconvError as exc:
        print(f"qconv: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for name, ok in manifest.checks.items():
        if not ok:
            print(f"check failed: {name}", file=sys.stderr)
    for run in manifest.runs:
        if run.error:
            print(f"run failed (seed {run.seed}): {run.error}", file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
