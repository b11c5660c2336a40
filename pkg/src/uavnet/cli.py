"""Command-line entry point: ``uavnet train|eval|baseline``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
The worker count for baseline episode fan-out is read from ``UAVNET_WORKERS``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .config import ConfigError, ExperimentConfig, load_config, packaged_config
from .learner.checkpoint import CheckpointError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("uavnet")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors map to 1 here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uavnet", description="UAV network trajectory and beamforming experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="YAML config path or packaged name (default, smoke)")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--episodes", type=int, default=None)
        sp.add_argument("--eq23-literal", action="store_true",
                        help="water-filling floors from channel norms instead of ZF costs")

    common(sub.add_parser("train", help="train a PPO agent"))
    ev = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    common(ev)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--start", choices=("random", "fixed"), default="random",
                    help="initial UAV positions: seeded random or the fixed grid")
    bl = sub.add_parser("baseline", help="run a reference scheme")
    common(bl)
    bl.add_argument("--baseline-kind", choices=harness.BASELINE_KINDS, default=None)
    return p


def _load(ref) -> ExperimentConfig:
    if ref is None:
        return load_config(packaged_config("default"))
    if ref in ("default", "smoke"):
        return load_config(packaged_config(ref))
    return load_config(ref)


def _run(args) -> dict:
    cfg = _load(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    literal = True if args.eq23_literal else None
    if args.episodes is not None and args.episodes < 0:
        raise ConfigError("--episodes must be non-negative")
    if args.command == "train":
        return harness.cmd_train(cfg, seed, args.out, episodes=args.episodes, eq23_literal=literal)
    if args.command == "eval":
        return harness.cmd_eval(cfg, args.checkpoint, seed, args.out,
                                episodes=args.episodes or 1, eq23_literal=literal,
                                start=args.start)
    kind = args.baseline_kind or cfg.baseline
    return harness.cmd_baseline(cfg, kind, seed, args.out,
                                episodes=20 if args.episodes is None else args.episodes)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"uavnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = _run(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"uavnet: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckpointError as exc:
        print(f"uavnet: checkpoint error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 2
        log.debug("runtime failure", exc_info=True)
        print(f"uavnet: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
