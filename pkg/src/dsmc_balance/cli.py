"""Command line entry point: ``dsmc-balance run <config> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .balance import STRATEGIES
from .config import ConfigError, load_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsmc-balance")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("config")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--ranks", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--out")
    p.add_argument("--dump-costmaps", action="store_true")
    p.add_argument("--timer", choices=("wall", "synthetic"))
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "strategy": args.strategy,
        "ranks": args.ranks,
        "seed": args.seed,
        "steps": args.steps,
        "dir": args.out,
        "timer": args.timer,
        "dump_costmaps": True if args.dump_costmaps else None,
    }
    try:
        cfg = load_config(args.config)
        cfg = cfg.replace(**{k: v for k, v in overrides.items() if v is not None})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .harness import run_experiment

    try:
        summary = run_experiment(cfg, quiet=not args.verbose)
    except Exception as exc:  # noqa: BLE001 - any failure past config is a runtime error
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if "imbalance_ratio" in summary:
        print(f"imbalance_ratio={summary['imbalance_ratio']:.4f} mean_T={summary['mean_T']:.6g} "
              f"wall_clock={summary['wall_clock']:.6g}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
