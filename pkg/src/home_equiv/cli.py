"""Batch command-line surface: gen | pretrain | train | eval | embed | selfcheck.

Commands are non-interactive and idempotent under a fixed --seed. Every
run prints its resolved configuration (flags > --config file > defaults)
before doing work. Exit codes: 0 ok, 1 selfcheck failure, 2 usage,
3 IO/data problem, 4 missing prerequisite checkpoint.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .errors import (BadConfig, ChecksumMismatch, CorruptManifest, EmptySplit,
                     HomeEquivError, IoError, MissingCheckpoint,
                     RegimePrereqViolation, TensorFormatError)

EXIT_OK = 0
EXIT_SELFCHECK = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PREREQ = 4

_IO_ERRORS = (IoError, CorruptManifest, ChecksumMismatch, TensorFormatError)
_PREREQ_ERRORS = (MissingCheckpoint, RegimePrereqViolation)

GEN_DEFAULTS = {"seed": 0, "count": 100, "size": "16x16", "views": 3, "aux": 0}
TRAIN_DEFAULTS = {
    "seed": 0, "epochs": 200, "batch_size": 16, "lr_start": 0.01,
    "lr_end": 0.0001, "alpha": 0.1, "finetune_epochs": 50,
    "finetune_lr": 0.0001, "n_dim": 16, "no_vn": False, "all_views": False,
    "train_split": "train",
}


class UsageError(Exception):
    pass


def _parser():
    p = argparse.ArgumentParser(prog="home-equiv", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", help="JSON file with default flag values")

    g = sub.add_parser("gen", help="generate a multi-view dataset")
    add_config(g)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--count", type=int)
    g.add_argument("--size", help="WxH, e.g. 16x16")
    g.add_argument("--views", type=int)
    g.add_argument("--aux", type=int, help="extra samples tagged 'aux'")

    def add_train_flags(sp, with_regime):
        add_config(sp)
        sp.add_argument("--data", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--metrics", help="metrics JSONL path "
                        "(default: OUT.metrics.jsonl)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--batch-size", dest="batch_size", type=int)
        sp.add_argument("--lr-start", dest="lr_start", type=float)
        sp.add_argument("--lr-end", dest="lr_end", type=float)
        sp.add_argument("--n-dim", dest="n_dim", type=int)
        sp.add_argument("--no-vn", dest="no_vn", action="store_const", const=True)
        sp.add_argument("--resume", action="store_true",
                        help="continue a stopped run from OUT")
        sp.add_argument("--stop-after", dest="stop_after", type=int,
                        help="stop after N epochs (for resume testing)")
        if with_regime:
            sp.add_argument("--regime", required=True,
                            choices=["sup", "sup-tl", "home-tl", "home-jo", "home"])
            sp.add_argument("--from", dest="from_ckpt")
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--finetune-epochs", dest="finetune_epochs", type=int)
            sp.add_argument("--finetune-lr", dest="finetune_lr", type=float)
            sp.add_argument("--all-views", dest="all_views", action="store_const",
                            const=True)
            sp.add_argument("--train-split", dest="train_split")

    pre = sub.add_parser("pretrain", help="equivariance-loss pretraining")
    add_train_flags(pre, with_regime=False)

    tr = sub.add_parser("train", help="train one regime")
    add_train_flags(tr, with_regime=True)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    add_config(ev)
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", default="test")

    em = sub.add_parser("embed", help="export representations as CSV")
    add_config(em)
    em.add_argument("--ckpt", required=True)
    em.add_argument("--data", required=True)
    em.add_argument("--out", required=True)
    em.add_argument("--split")

    sub.add_parser("selfcheck", help="run the fast invariant suite")
    return p


def _resolve(args, defaults):
    """flags > config file > built-in defaults."""
    file_values = {}
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key, default in defaults.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_values:
            resolved[key] = file_values[key]
        else:
            resolved[key] = default
    return resolved


def _echo_config(command, resolved, extras=None):
    payload = {"command": command, **(extras or {}), **resolved}
    print("config " + json.dumps(payload, sort_keys=True))


def _train_config(resolved, regime="sup"):
    from .trainer import TrainConfig
    return TrainConfig(
        regime=regime, epochs=resolved["epochs"],
        batch_size=resolved["batch_size"], lr_start=resolved["lr_start"],
        lr_end=resolved["lr_end"], alpha=resolved["alpha"],
        finetune_epochs=resolved["finetune_epochs"],
        finetune_lr=resolved["finetune_lr"], seed=resolved["seed"],
        n_dim=resolved["n_dim"], use_vn=not resolved["no_vn"],
        all_views=resolved["all_views"], train_split=resolved["train_split"],
    ).validate()


def _cmd_gen(args):
    from .data import generate_dataset
    resolved = _resolve(args, GEN_DEFAULTS)
    if resolved["count"] < 1:
        raise UsageError(f"--count must be positive, got {resolved['count']}")
    if resolved["views"] < 2:
        raise UsageError(f"--views must be at least 2, got {resolved['views']}")
    if resolved["aux"] < 0:
        raise UsageError("--aux cannot be negative")
    try:
        width, height = (int(v) for v in str(resolved["size"]).lower().split("x"))
    except ValueError as exc:
        raise UsageError(f"--size must look like 16x16, got {resolved['size']}") from exc
    _echo_config("gen", resolved, {"out": args.out})
    manifest_path, view_params = generate_dataset(
        args.out, resolved["seed"], resolved["count"], width=width,
        height=height, n_views=resolved["views"], aux=resolved["aux"])
    print(f"manifest {manifest_path}")
    for params in view_params:
        print(f"view-params sx={params.sx!r} sy={params.sy!r} tx={params.tx!r} "
              f"ty={params.ty!r} theta_deg={params.theta_deg!r}")
    return EXIT_OK


def _cmd_pretrain(args):
    from .data import load_dataset
    from .trainer import pretrain
    # pretrain shares the train schema so one config file can serve both
    resolved = _resolve(args, TRAIN_DEFAULTS)
    cfg = _train_config(resolved)
    _echo_config("pretrain", resolved, {"data": args.data, "out": args.out})
    dataset = load_dataset(args.data)
    metrics = args.metrics or f"{args.out}.metrics.jsonl"
    result = pretrain(dataset, cfg, args.out, metrics,
                      resume=args.resume, stop_after=args.stop_after)
    print(f"checkpoint {result['out']}")
    print(f"best_epoch {result['best_epoch']} "
          f"best_val_loss {-result['best_metric']!r}")
    return EXIT_OK


def _cmd_train(args):
    from .data import load_dataset
    from .trainer import train
    resolved = _resolve(args, TRAIN_DEFAULTS)
    cfg = _train_config(resolved, regime=args.regime)
    _echo_config("train", resolved,
                 {"data": args.data, "out": args.out, "regime": args.regime,
                  "from": args.from_ckpt})
    dataset = load_dataset(args.data)
    metrics = args.metrics or f"{args.out}.metrics.jsonl"
    result = train(dataset, cfg, args.out, metrics, from_path=args.from_ckpt,
                   resume=args.resume, stop_after=args.stop_after)
    print(f"checkpoint {result['out']}")
    best = result["best_metric"]
    if math.isfinite(best):
        print(f"best_epoch {result['best_epoch']} best_val_metric {best!r}")
    return EXIT_OK


def _cmd_eval(args):
    from .data import load_dataset
    from .homt import load_tensors
    from .trainer import evaluate, model_from_tensors
    if not os.path.exists(args.ckpt):
        raise MissingCheckpoint(f"checkpoint not found: {args.ckpt}")
    _echo_config("eval", {"ckpt": args.ckpt, "data": args.data,
                          "split": args.split})
    model = model_from_tensors(load_tensors(args.ckpt))
    dataset = load_dataset(args.data)
    result = evaluate(model, dataset, args.split)
    print(f"accuracy={result.accuracy:.4f}")
    print(f"n={result.n}")
    for row in result.confusion:
        print("confusion " + " ".join(str(int(v)) for v in row))
    return EXIT_OK


def _cmd_embed(args):
    from .data import load_dataset
    from .homt import load_tensors
    from .trainer import export_embeddings, model_from_tensors
    if not os.path.exists(args.ckpt):
        raise MissingCheckpoint(f"checkpoint not found: {args.ckpt}")
    _echo_config("embed", {"ckpt": args.ckpt, "data": args.data,
                           "out": args.out, "split": args.split})
    model = model_from_tensors(load_tensors(args.ckpt))
    dataset = load_dataset(args.data)
    rows = export_embeddings(model, dataset, args.out, split=args.split)
    print(f"rows {rows}")
    return EXIT_OK


def _cmd_selfcheck(_args):
    from .selfcheck import run_selfcheck
    _echo_config("selfcheck", {})
    return EXIT_OK if run_selfcheck() else EXIT_SELFCHECK


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handler = {
        "gen": _cmd_gen, "pretrain": _cmd_pretrain, "train": _cmd_train,
        "eval": _cmd_eval, "embed": _cmd_embed, "selfcheck": _cmd_selfcheck,
    }[args.command]
    try:
        return handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _PREREQ_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except _IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EmptySplit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BadConfig as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HomeEquivError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
