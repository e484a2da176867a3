"""Command-line entry point: ``leorate {train,evaluate,sweep,ablate,report}``.

Exit codes: 0 success, 2 configuration error, 3 runtime check failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .agent import NonFiniteLossError
from .gateway import LoopLatencyError

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.quality_table is not None:
        from pathlib import Path
        overrides["quality_table"] = str(Path(args.quality_table).resolve())
    return cfg.with_overrides(**overrides) if overrides else cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (default: shipped config)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: config output_dir)")
    common.add_argument("--quality-table", help="override the quality table CSV")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="leorate", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a DQN rate controller")
    ev = sub.add_parser("evaluate", parents=[common], help="run policies through the loop")
    ev.add_argument("--policy", action="append", required=True,
                    help="min_rate, mid_rate, max_rate or a checkpoint path (repeatable)")
    sw = sub.add_parser("sweep", parents=[common], help="grid over one config field")
    sw.add_argument("--field", required=True, help="dotted config field, e.g. reward.lambda_under")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--policy", default="mid_rate")
    ab = sub.add_parser("ablate", parents=[common], help="SNR-prediction ablation arms")
    ab.add_argument("--arm", action="append", choices=sorted(harness.ABLATION_ARMS))
    rp = sub.add_parser("report", parents=[common], help="re-aggregate step traces in a run dir")
    rp.add_argument("run_dir")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            harness.cmd_report(args.run_dir)
            print((harness.Path(args.run_dir) / "report.txt").read_text(), end="")
            return 0
        cfg = _load(args)
        if args.command == "train":
            res = harness.cmd_train(cfg, args.out)
            print(f"checkpoint: {res['checkpoint']}  sha256={harness.sha256_file(res['checkpoint'])}")
        elif args.command == "evaluate":
            harness.cmd_evaluate(cfg, args.policy, args.out)
            out = harness.resolve_output(cfg, args.out)
            print((out / "comparison.txt").read_text(), end="")
        elif args.command == "sweep":
            harness.cmd_sweep(cfg, args.field, args.values.split(","), args.policy, args.out)
            out = harness.resolve_output(cfg, args.out)
            print((out / "sweep.csv").read_text(), end="")
        elif args.command == "ablate":
            harness.cmd_ablate(cfg, args.out, args.arm)
            out = harness.resolve_output(cfg, args.out)
            print((out / "ablation.txt").read_text(), end="")
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LoopLatencyError, NonFiniteLossError, AssertionError) as exc:
        print(f"runtime check failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
