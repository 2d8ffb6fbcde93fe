"""Flat key=value run configuration with strict key checking.

Precedence, lowest to highest: built-in default, PAIRCL_SEED environment
override (seed only), config file, command-line flag. Unknown keys in a
config file are hard errors; silent typos are the main reproducibility
hazard.
"""

from __future__ import annotations

import os

from .errors import ConfigError

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in _BOOL_TRUE:
        return True
    if low in _BOOL_FALSE:
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_opt_int(raw: str):
    return None if raw.strip().lower() in ("none", "") else int(raw)


# key -> (parser, default, help)
SCHEMA: dict[str, tuple] = {
    "seed": (int, 0, "global random seed"),
    "epochs": (int, 10, "training epochs"),
    "batch_size": (int, 64, "examples per batch (K)"),
    "tau": (float, 0.05, "contrastive temperature"),
    "alpha": (float, 1.0, "cross-entropy weight in the combined loss"),
    "lr": (float, 2e-3, "Adam learning rate"),
    "k": (int, 16, "encoder hidden width"),
    "d": (_parse_opt_int, None, "co-attention projection width (default: k)"),
    "vocab_size": (int, 200, "vocabulary size"),
    "max_len": (int, 24, "padded sequence length"),
    "no_scl": (_parse_bool, False, "drop the contrastive term"),
    "no_ce": (_parse_bool, False, "drop the cross-entropy term"),
    "no_crossattn": (_parse_bool, False, "replace cross attention with pooled concat"),
    "stratify": (_parse_bool, True, "guarantee >= 2 examples per class per batch"),
    "scl_mean_of_log": (_parse_bool, False,
                        "average per-positive logs instead of the log of their mean"),
    "n_train": (int, 3000, "synthetic training examples"),
    "n_dev": (int, 600, "synthetic dev examples"),
    "n_test": (int, 600, "synthetic test examples"),
    "premise_min_len": (int, 4, "minimum premise length"),
    "premise_max_len": (int, 12, "maximum premise length"),
    "hypothesis_min_len": (int, 3, "minimum hypothesis length"),
    "hypothesis_max_len": (int, 8, "maximum hypothesis length"),
    "data_dir": (str, "data", "dataset directory"),
    "out_dir": (str, "out", "artifact directory"),
    "format": (str, "jsonl", "dataset file format: jsonl or tsv"),
}

TRAIN_KEYS = ("epochs", "batch_size", "tau", "alpha", "lr", "seed", "no_scl",
              "no_ce", "no_crossattn", "stratify", "scl_mean_of_log", "k", "d",
              "vocab_size", "max_len")


def defaults() -> dict:
    return {key: spec[1] for key, spec in SCHEMA.items()}


def parse_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment; unknown keys raise."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{line_no}: unknown config key {key!r}")
            parser = SCHEMA[key][0]
            try:
                values[key] = parser(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{line_no}: bad value for {key}: {raw!r}") from exc
    return values


def resolve(config_path: str | None = None, overrides: dict | None = None,
            env: dict | None = None):
    """Merge defaults, environment, config file, and flag overrides.

    Returns (config dict covering every key, set of explicitly-set keys).
    """
    env = os.environ if env is None else env
    cfg = defaults()
    explicit = set()
    if "PAIRCL_SEED" in env:
        try:
            cfg["seed"] = int(env["PAIRCL_SEED"])
        except ValueError as exc:
            raise ConfigError(f"PAIRCL_SEED must be an integer, "
                              f"got {env['PAIRCL_SEED']!r}") from exc
    if config_path is not None:
        file_values = parse_config_file(config_path)
        cfg.update(file_values)
        explicit |= set(file_values)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value
        explicit.add(key)
    if cfg["format"] not in ("jsonl", "tsv"):
        raise ConfigError(f"format must be jsonl or tsv, got {cfg['format']!r}")
    return cfg, explicit


def echo(cfg: dict) -> str:
    """One-line-per-key resolved config block for run headers."""
    lines = ["resolved config:"]
    for key in sorted(cfg):
        lines.append(f"  {key} = {cfg[key]}")
    return "\n".join(lines)
