"""Command-line entry point: ``stocg run|validate|lmo-check|round|gen-ratings``."""
from __future__ import annotations

import argparse
import sys

from . import experiment
from .config import ConfigError, load_config, validate
from .ratings import synthetic_ratings, write_ratings_csv


def _load(path, args):
    cfg = load_config(path)
    # CLI subsample flags override the config's problem block
    prob = cfg.data.get("problem")
    for flag in ("max_users", "max_items"):
        v = getattr(args, flag, None)
        if v is not None:
            if not isinstance(prob, dict):
                raise ConfigError([f"{cfg.source}: --{flag.replace('_', '-')} needs a problem block"])
            prob[flag] = v
    return cfg


def _log(*a, file=None):
    print(*a, file=file or sys.stdout)


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    return experiment.run(cfg, out=args.out, workers=args.workers, log=_log)


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config, args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    diags = validate(cfg)
    for d in diags:
        print(d, file=sys.stderr)
    if diags:
        return 2
    print(f"{args.config}: ok")
    return 0


def cmd_lmo_check(args) -> int:
    return experiment.run_lmo_check(args.trials, args.seed, log=_log)


def cmd_round(args) -> int:
    try:
        cfg = _load(args.config, args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    if cfg.data.get("kind", "round") != "round":
        print(f"{args.config}: expected kind 'round', got {cfg.data['kind']!r}", file=sys.stderr)
        return 2
    cfg.data.setdefault("kind", "round")
    return experiment.run_round(cfg, out=args.out, log=_log)


def cmd_gen_ratings(args) -> int:
    R = synthetic_ratings(args.users, args.items, args.density, args.seed)
    write_ratings_csv(R, args.output)
    print(f"wrote {int((R > 0).sum())} ratings ({args.users} users x {args.items} items) to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stocg", description="Stochastic conditional-gradient experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    def subsample_flags(p):
        p.add_argument("--max-users", type=int, dest="max_users", help="subsample at most this many users")
        p.add_argument("--max-items", type=int, dest="max_items", help="subsample at most this many items")

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--workers", type=int, help="worker processes (default: STOCG_THREADS or all cores)")
    subsample_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    subsample_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("lmo-check", help="fuzz the linear oracles against brute force")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_lmo_check)

    p = sub.add_parser("round", help="pipage-round a fractional point and report frequencies")
    p.add_argument("config")
    p.add_argument("--out", help="directory for round.json")
    subsample_flags(p)
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("gen-ratings", help="write a synthetic user,item,rating CSV")
    p.add_argument("output")
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--items", type=int, default=10)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_ratings)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("--workers must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
