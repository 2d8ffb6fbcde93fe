"""Command-line entry point.

Subcommands: gen-data, train, eval, ablate, gradcheck, inspect. Every run
prints the fully resolved configuration so any artifact can be reproduced
from its log. Exit codes: 0 success, 1 validation/usage error, 2 runtime
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import config as cfgmod
from .data import (
    SynthConfig,
    generate,
    load_file,
    records_to_examples,
    build_vocab,
    save_file,
)
from .errors import ConfigError, PairclError, TrainingDivergedError
from .evalab import ablation_sweep, evaluate
from .gradcheck import run_suite
from .train import TrainConfig, load_checkpoint, model_from_checkpoint, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common_flags(p: _Parser) -> None:
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--no-scl", dest="no_scl", action="store_const", const=True, default=None)
    p.add_argument("--no-ce", dest="no_ce", action="store_const", const=True, default=None)
    p.add_argument("--no-crossattn", dest="no_crossattn", action="store_const",
                   const=True, default=None)
    p.add_argument("--data-dir", dest="data_dir", default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--format", dest="format", choices=("jsonl", "tsv"), default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="paircl", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, desc in (
        ("gen-data", "write deterministic synthetic splits"),
        ("train", "train a model and write checkpoint + reports"),
        ("eval", "evaluate a checkpoint on a split"),
        ("ablate", "train all ablation variants over several seeds"),
        ("gradcheck", "finite-difference check of every parameter group"),
        ("inspect", "print checkpoint metadata"),
    ):
        p = sub.add_parser(name, help=desc)
        _add_common_flags(p)
        if name in ("eval", "inspect"):
            p.add_argument("--checkpoint", default=None)
        if name == "eval":
            p.add_argument("--split", choices=("train", "dev", "test"), default="test")
            p.add_argument("--csv", default=None)
        if name == "ablate":
            p.add_argument("--seeds", default="0,1,2",
                           help="comma-separated seed list")
            p.add_argument("--csv", default=None)
        if name == "gradcheck":
            p.add_argument("--points", type=int, default=20)
            p.add_argument("--tol", type=float, default=1e-5)
    return parser


def _resolved(args) -> tuple[dict, set]:
    overrides = {key: getattr(args, key, None) for key in cfgmod.SCHEMA}
    return cfgmod.resolve(args.config, overrides)


def _train_config(cfg: dict) -> TrainConfig:
    tc = TrainConfig(**{key: cfg[key] for key in cfgmod.TRAIN_KEYS})
    tc.validate()
    return tc


def _synth_config(cfg: dict) -> SynthConfig:
    sc = SynthConfig(
        vocab_size=cfg["vocab_size"], n_train=cfg["n_train"], n_dev=cfg["n_dev"],
        n_test=cfg["n_test"],
        premise_len=(cfg["premise_min_len"], cfg["premise_max_len"]),
        hypothesis_len=(cfg["hypothesis_min_len"], cfg["hypothesis_max_len"]),
        max_len=cfg["max_len"], seed=cfg["seed"])
    sc.validate()
    return sc


def _split_path(data_dir: str, name: str, fmt: str) -> str:
    return os.path.join(data_dir, f"{name}.{fmt}")


def _load_splits(cfg: dict):
    """Read train/dev/test from the data directory. Token-id records load
    directly; text records share a vocabulary built from the train split."""
    data_dir, fmt = cfg["data_dir"], cfg["format"]
    raw = {}
    skipped_total = 0
    for name in ("train", "dev", "test"):
        path = _split_path(data_dir, name, fmt)
        if not os.path.exists(path):
            raise ConfigError(f"missing split file {path}; run gen-data first")
        raw[name], skipped = load_file(path, fmt)
        skipped_total += skipped
    is_text = any(isinstance(rec.premise, str) for rec in raw["train"])
    vocab = None
    if is_text:
        corpus = [rec.premise for rec in raw["train"]] + \
                 [rec.hypothesis for rec in raw["train"]]
        vocab = build_vocab(corpus, max_size=cfg["vocab_size"])
    splits = tuple(records_to_examples(raw[name], max_len=cfg["max_len"], vocab=vocab)
                   for name in ("train", "dev", "test"))
    return splits, skipped_total, vocab


def _check_vocab_bound(splits, vocab_size: int) -> None:
    top = 0
    for split in splits:
        for ex in split:
            top = max(top, int(ex.premise.tokens.max()), int(ex.hypothesis.tokens.max()))
    if top >= vocab_size:
        raise ConfigError(f"dataset contains token id {top}, but vocab_size is "
                          f"{vocab_size}; raise vocab_size")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    cfg, _ = _resolved(args)
    print(cfgmod.echo(cfg))
    synth = _synth_config(cfg)
    splits = generate(synth)
    os.makedirs(cfg["data_dir"], exist_ok=True)
    for name, split in zip(("train", "dev", "test"), splits):
        path = _split_path(cfg["data_dir"], name, cfg["format"])
        save_file(split, path, cfg["format"])
        print(f"wrote {len(split)} examples to {path}")
    meta = {"vocab_size": synth.vocab_size, "max_len": synth.max_len,
            "seed": synth.seed, "format": cfg["format"],
            "sizes": [len(s) for s in splits]}
    with open(os.path.join(cfg["data_dir"], "dataset.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def _adopt_dataset_meta(cfg: dict, explicit: set) -> None:
    """Dataset dimensions win over defaults the user did not set."""
    meta_path = os.path.join(cfg["data_dir"], "dataset.json")
    if not os.path.exists(meta_path):
        return
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    for key in ("vocab_size", "max_len"):
        if key in meta and key not in explicit:
            cfg[key] = meta[key]


REFERENCE_SCALE = {"batch_size": 512, "lr": 5e-5, "k": 768}


def _scale_note(cfg: dict) -> str:
    parts = [f"{key} {cfg[key]:g} (reference {ref:g})"
             for key, ref in REFERENCE_SCALE.items() if cfg[key] != ref]
    return "desk-scale settings: " + ", ".join(parts) if parts else ""


def _cmd_train(args) -> int:
    cfg, explicit = _resolved(args)
    _adopt_dataset_meta(cfg, explicit)
    print(cfgmod.echo(cfg))
    note = _scale_note(cfg)
    if note:
        print(note)
    splits, skipped, vocab = _load_splits(cfg)
    if vocab is not None:
        cfg["vocab_size"] = len(vocab)
    if skipped:
        print(f"skipped {skipped} unannotated records")
    _check_vocab_bound(splits, cfg["vocab_size"])
    tconf = _train_config(cfg)
    report, _ = train(tconf, splits, out_dir=cfg["out_dir"], log_stream=sys.stdout)
    print(f"best dev acc {report.best_dev_acc:.4f} (epoch {report.best_epoch}); "
          f"test acc {report.test_acc:.4f}")
    print(f"artifacts in {cfg['out_dir']}")
    return 0


def _cmd_eval(args) -> int:
    cfg, explicit = _resolved(args)
    if not args.checkpoint:
        print("eval: --checkpoint is required", file=sys.stderr)
        return 1
    _adopt_dataset_meta(cfg, explicit)
    print(cfgmod.echo(cfg))
    splits, _, _ = _load_splits(cfg)
    split = dict(zip(("train", "dev", "test"), splits))[args.split]
    model = model_from_checkpoint(args.checkpoint)
    report = evaluate(model, split)
    print(report.table())
    print(report.to_json())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("metric,value\n")
            fh.write(f"accuracy,{report.accuracy:.6f}\n")
            fh.write(f"intra_cosine,{report.intra_cosine:.6f}\n")
            fh.write(f"inter_cosine,{report.inter_cosine:.6f}\n")
    return 0


def _cmd_ablate(args) -> int:
    cfg, explicit = _resolved(args)
    _adopt_dataset_meta(cfg, explicit)
    print(cfgmod.echo(cfg))
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {args.seeds!r}")
    splits, _, _ = _load_splits(cfg)
    _check_vocab_bound(splits, cfg["vocab_size"])
    table = ablation_sweep(_train_config(cfg), seeds, splits, progress=sys.stdout)
    print(table.table())
    print(table.to_json())
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(table.to_csv())
    if cfg["out_dir"]:
        os.makedirs(cfg["out_dir"], exist_ok=True)
        with open(os.path.join(cfg["out_dir"], "ablation.json"), "w",
                  encoding="utf-8") as fh:
            fh.write(table.to_json() + "\n")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg, _ = _resolved(args)
    print(cfgmod.echo(cfg))
    reports = run_suite(seed=cfg["seed"], points=args.points, tol=args.tol,
                        progress=sys.stdout)
    ok = True
    for group, report in sorted(reports.items()):
        print(str(report))
        ok &= report.passed
    return 0 if ok else 1


def _cmd_inspect(args) -> int:
    if not args.checkpoint:
        print("inspect: --checkpoint is required", file=sys.stderr)
        return 1
    state = load_checkpoint(args.checkpoint)
    print(f"checkpoint version {state.meta['version']}")
    print(f"epoch {state.meta['epoch']}  adam_t {state.meta['adam_t']}")
    print(f"best dev acc {state.meta['best_dev_acc']:.4f} "
          f"(epoch {state.meta['best_epoch']})")
    print(f"rep_dim {state.meta['rep_dim']}")
    print(cfgmod.echo(state.config.to_dict()))
    print("tensors:")
    for name in sorted(state.arrays):
        print(f"  {name} {list(state.arrays[name].shape)}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "gradcheck": _cmd_gradcheck,
    "inspect": _cmd_inspect,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if args.command is None:
        parser.print_help()
        return 1
    try:
        return _COMMANDS[args.command](args)
    except TrainingDivergedError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        if exc.dump is not None:
            print(json.dumps(exc.dump)[:2000], file=sys.stderr)
        return 2
    except (PairclError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - unexpected failures
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
