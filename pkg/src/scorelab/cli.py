"""Command-line entry point: ``scorelab <subcommand> [--config PATH] [--seed N] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .harness import ConfigError, ExperimentConfig, ReportError


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scorelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("calibrate", "compute EER/minDCF thresholds for every target oracle"),
        ("attack", "run the configured attacks and write results.csv, traces/, summary.txt"),
        ("train-inverse", "train inverse models with and without the structure loss"),
        ("id-constraints", "measure round-trip similarity under angular feature noise"),
        ("report", "re-render tables from an existing results directory"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="JSON experiment config (unknown keys are rejected)")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--method", help="comma-separated attack methods, e.g. sp,latent-nes")
        p.add_argument("--trials", type=int, help="victims per correlation level")
    return parser


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    methods = tuple(m.strip() for m in args.method.split(",") if m.strip()) if args.method else None
    return harness.with_overrides(config, seed=args.seed, out=args.out, trials=args.trials, methods=methods)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args)
    except (ConfigError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "calibrate":
        cal = harness.calibrate_to_dir(config)
        for rho, c in sorted(cal.items(), key=lambda kv: float(kv[0])):
            print(f"rho={float(rho):g} EER={c['eer']:.4f} tau_E={c['tau_E']:.5f} "
                  f"minDCF={c['min_dcf']:.4f} tau_M={c['tau_M']:.5f}")
            for w in c["warnings"]:
                print(f"  warning: {w}")
    elif args.command == "attack":
        summary = harness.attack_to_dir(config)
        print(harness.render_summary(summary, config.config_hash(), config.seed), end="")
    elif args.command == "train-inverse":
        harness.train_inverse_to_dir(config)
        print(harness.report(config.out)[0], end="")
    elif args.command == "id-constraints":
        harness.id_constraints_to_dir(config)
        print(harness.report(config.out)[0], end="")
    else:
        try:
            text, _ = harness.report(config.out)
        except ReportError as exc:
            for problem in exc.problems:
                print(f"error: {problem}", file=sys.stderr)
            return 1
        print(text, end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
