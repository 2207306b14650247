"""Command-line entry point.

Subcommands: ``train``, ``evaluate``, ``simulate-fn``, ``sweep``, ``split``.
Every config key is also a flag (``--batch-size`` or ``--batch_size``);
flags override ``--config FILE``. Exit codes: 0 success, 2 configuration
error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dataset import ParseError, export_split
from .errors import ConfigError
from .evaluation import evaluate_users, write_user_metrics
from .experiment import (
    CONFIG_KEYS,
    SWEEP_AXES,
    load_config,
    load_dataset,
    run_experiment,
    run_fn_simulation,
    run_sweep,
)
from .models import NormalizedGraph, load_checkpoint

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' config file")
    group = p.add_argument_group("config overrides")
    for key in CONFIG_KEYS:
        names = {f"--{key}", f"--{key.replace('_', '-')}"}
        group.add_argument(*sorted(names), dest=f"cfg_{key}", metavar="VALUE", default=None)


def _config(args):
    overrides = {
        key: getattr(args, f"cfg_{key}")
        for key in CONFIG_KEYS
        if getattr(args, f"cfg_{key}") is not None
    }
    return load_config(args.config, overrides)


def _print_summary(summary: dict) -> None:
    for key, value in summary.items():
        print(f"{key} = {value}")


def cmd_train(args) -> int:
    res = run_experiment(_config(args))
    _print_summary(res.summary)
    print(f"run dir: {res.out_dir}")
    return EXIT_OK


def cmd_simulate_fn(args) -> int:
    res = run_fn_simulation(_config(args))
    _print_summary(res.summary)
    for epoch, step, disclosed, frac in res.disclosures:
        print(f"disclosed step {step} at epoch {epoch}: {disclosed} items ({frac:.3f})")
    print(f"run dir: {res.out_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [v for v in args.values.split(",") if v.strip()]
    res = run_sweep(cfg, args.axis, values, jobs=args.jobs, simulate=args.simulate)
    print(",".join(res.rows[0]))
    for row in res.rows:
        print(",".join(str(v) for v in row.values()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    ds = load_dataset(cfg)
    if not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}", "checkpoint")
    model = load_checkpoint(args.checkpoint)
    if (model.n_users, model.n_items) != (ds.n_users, ds.n_items):
        raise ConfigError("checkpoint shape does not match the dataset", "checkpoint")
    if model.mode == "LightGCN":
        model = model.with_graph(NormalizedGraph.from_dataset(ds))
    users, recalls, ndcgs = evaluate_users(model, ds, cfg.eval_config(), args.split)
    if len(users) == 0:
        raise ConfigError(f"no users with {args.split} targets", "split")
    print(f"users = {len(users)}")
    print(f"recall@{cfg.K} = {float(recalls.mean())!r}")
    print(f"ndcg@{cfg.K} = {float(ndcgs.mean())!r}")
    if args.user_metrics:
        write_user_metrics(args.user_metrics, users, recalls, ndcgs)
    return EXIT_OK


def cmd_split(args) -> int:
    cfg = _config(args)
    ds = load_dataset(cfg)
    out = Path(args.out_dir or cfg.out)
    paths = export_split(ds, out)
    print(ds.summary())
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdnsrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a split")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--eval-split", dest="split", choices=("val", "test"), default="test")
    p.add_argument("--user-metrics", help="write per-user user,recall,ndcg CSV here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate-fn", help="false-negative disclosure simulation")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate_fn)

    p = sub.add_parser("sweep", help="grid over one axis")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated grid values")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--simulate", action="store_true", help="run each point as an FN simulation")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("split", help="export train/val/test/fn pair files")
    _add_config_flags(p)
    p.add_argument("--out-dir", help="defaults to the config's out")
    p.set_defaults(func=cmd_split)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
