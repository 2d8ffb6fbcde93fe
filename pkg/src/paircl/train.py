"""End-to-end training: model wiring, the epoch loop, checkpoints, reports.

Training is deterministic given (seed, config, data): batching seeds derive
from (seed, epoch), all math is float64 numpy, and gradient accumulation
runs in batch order. Checkpoints serialize every parameter plus the full
Adam state in a flat binary container with no timestamps, so identical runs
produce bit-identical files.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .crossattn import (
    CrossAttnParams,
    backward_pair,
    backward_pair_concat,
    forward_pair,
    forward_pair_concat,
    init_crossattn,
)
from .data import N_CLASSES, Example, labels_of, make_batches
from .encoder import init_encoder
from .errors import CheckpointError, ConfigError, TrainingDivergedError
from .objectives import (
    Batch,
    ClassifierParams,
    init_classifier,
    predict_logits,
    total_loss,
)
from .optim import Adam
from .tensor import Param

CHECKPOINT_MAGIC = b"PAIRCL-CKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and model dimensions for one training run.

    Defaults are desk scale; the temperature, loss weight, and epoch count
    keep their reference values (tau 0.05, alpha 1, 10 epochs) while the
    batch size is scaled down for a single CPU core and the learning rate is
    raised so a small randomly initialized model converges within the fixed
    epoch budget. Reference-scale values remain reachable through the config.
    """

    epochs: int = 10
    batch_size: int = 64
    tau: float = 0.05
    alpha: float = 1.0
    lr: float = 2e-3
    seed: int = 0
    no_scl: bool = False
    no_ce: bool = False
    no_crossattn: bool = False
    stratify: bool = True
    scl_mean_of_log: bool = False
    k: int = 16
    d: int | None = None
    vocab_size: int = 200
    max_len: int = 24
    n_classes: int = N_CLASSES
    grad_clip: float | None = None  # reserved, off by default

    def validate(self) -> None:
        if self.no_scl and self.no_ce:
            raise ConfigError("TrainConfig: no_scl and no_ce cannot both be set")
        if self.epochs < 0:
            raise ConfigError(f"TrainConfig: epochs {self.epochs} < 0")
        if self.batch_size < 2:
            raise ConfigError(f"TrainConfig: batch_size {self.batch_size} < 2")
        if self.tau <= 0:
            raise ConfigError(f"TrainConfig: tau {self.tau} <= 0")
        if self.lr <= 0:
            raise ConfigError(f"TrainConfig: lr {self.lr} <= 0")
        if min(self.k, self.vocab_size, self.max_len, self.n_classes) < 1:
            raise ConfigError("TrainConfig: dimensions must be >= 1")

    @property
    def attn_dim(self) -> int:
        return self.k if self.d is None else self.d

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        cfg = TrainConfig(**d)
        cfg.validate()
        return cfg


class PairModel:
    """Wired model: encoder (+ cross attention unless ablated) + classifier."""

    def __init__(self, config: TrainConfig):
        config.validate()
        self.config = config
        self.encoder = init_encoder(config.vocab_size, config.k, config.max_len,
                                    seed=config.seed)
        if config.no_crossattn:
            self.crossattn: CrossAttnParams | None = None
            self.rep_dim = 4 * config.k
        else:
            self.crossattn = init_crossattn(config.k, config.attn_dim,
                                            seed=config.seed + 1)
            self.rep_dim = 8 * config.k
        self.classifier = init_classifier(config.n_classes, self.rep_dim,
                                          seed=config.seed + 2)

    def params(self) -> list[Param]:
        out = self.encoder.params()
        if self.crossattn is not None:
            out += self.crossattn.params()
        return out + self.classifier.params()

    def zero_grads(self) -> None:
        for p in self.params():
            p.zero_grad()

    def forward(self, example: Example):
        if self.crossattn is None:
            return forward_pair_concat(example.premise, example.hypothesis,
                                       self.encoder)
        return forward_pair(example.premise, example.hypothesis, self.encoder,
                            self.crossattn)

    def backward(self, cache, dz, dz_norm) -> None:
        if self.crossattn is None:
            backward_pair_concat(cache, dz, dz_norm, self.encoder)
        else:
            backward_pair(cache, dz, dz_norm, self.encoder, self.crossattn)

    def reps(self, split) -> np.ndarray:
        """Forward-only raw pair vectors, one row per example."""
        return np.stack([self.forward(ex)[0].z for ex in split])

    def norm_reps(self, split) -> np.ndarray:
        return np.stack([self.forward(ex)[0].z_norm for ex in split])

    def predict(self, split) -> np.ndarray:
        return predict_logits(self.reps(split), self.classifier).argmax(axis=1)

    def accuracy(self, split) -> float:
        return float((self.predict(split) == labels_of(split)).mean())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.params()}

    def load_snapshot(self, arrays: dict[str, np.ndarray]) -> None:
        restore_params(self.params(), arrays)


def ablation_variant(config: TrainConfig) -> PairModel:
    """Model wiring for the configured ablation flags. ``no_crossattn`` swaps
    the interaction module for plain pooled concatenation (rep width 4k)."""
    return PairModel(config)


def restore_params(params: list[Param], arrays: dict[str, np.ndarray],
                   prefix: str = "") -> None:
    for p in params:
        key = prefix + p.name
        if key not in arrays:
            raise CheckpointError(f"checkpoint missing tensor {key!r}")
        if arrays[key].shape != p.value.shape:
            raise CheckpointError(
                f"checkpoint tensor {key!r} has shape {arrays[key].shape}, "
                f"model expects {p.value.shape}")
        p.value[...] = arrays[key]


# ---------------------------------------------------------------------------
# linear probe (used to score runs trained without the cross-entropy term)
# ---------------------------------------------------------------------------

def fit_linear_probe(reps: np.ndarray, labels: np.ndarray, n_classes: int,
                     seed: int = 0, steps: int = 300, lr: float = 0.05) -> ClassifierParams:
    """Fit a softmax classifier on frozen representations with full-batch Adam."""
    probe = init_classifier(n_classes, reps.shape[1], seed=seed)
    frozen = [PairRepView(z) for z in reps]
    batch = Batch(reps=frozen, labels=labels)
    opt = Adam(probe.params(), lr=lr)
    for _ in range(steps):
        opt.zero_grads()
        total_loss(batch, tau=1.0, alpha=1.0, params=probe, no_scl=True)
        opt.step()
    return probe


class PairRepView:
    """Adapter exposing a raw vector with the PairRep interface."""

    __slots__ = ("z", "z_norm", "zero_norm")

    def __init__(self, z: np.ndarray):
        self.z = z
        norm = np.linalg.norm(z)
        self.z_norm = z / norm if norm > 0 else z.copy()
        self.zero_norm = norm == 0.0


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    l_scl: float
    l_ce: float
    l_total: float
    dev_acc: float
    skipped_anchors: int
    zero_norm_reps: int
    wall_time: float


@dataclass
class RunReport:
    config: dict
    seed: int
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_acc: float = 0.0
    test_acc: float | None = None
    total_wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "epochs": [asdict(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_dev_acc": self.best_dev_acc,
            "test_acc": self.test_acc,
            "total_wall_time": self.total_wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _epoch_seed(seed: int, epoch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, epoch])


def _dev_accuracy(model: PairModel, config: TrainConfig, train_split, dev_split) -> float:
    """Dev accuracy; without a trained CE head, fit a probe on frozen train
    representations first and score with it."""
    if not config.no_ce:
        return model.accuracy(dev_split)
    probe = fit_linear_probe(model.reps(train_split), labels_of(train_split),
                             config.n_classes, seed=config.seed)
    logits = predict_logits(model.reps(dev_split), probe)
    return float((logits.argmax(axis=1) == labels_of(dev_split)).mean())


def _run_batch(model: PairModel, opt: Adam, batch_examples, config: TrainConfig):
    opt.zero_grads()
    reps = []
    caches = []
    for ex in batch_examples:
        rep, cache = model.forward(ex)
        reps.append(rep)
        caches.append(cache)
    batch = Batch(reps=reps, labels=labels_of(batch_examples))
    obj, dZ, dZ_norm = total_loss(
        batch, tau=config.tau, alpha=config.alpha, params=model.classifier,
        no_scl=config.no_scl, no_ce=config.no_ce,
        mean_of_log=config.scl_mean_of_log)
    if not np.isfinite(obj.l_total):
        dump = {
            "labels": batch.labels.tolist(),
            "l_scl": obj.l_scl,
            "l_ce": obj.l_ce,
            "premises": [ex.premise.tokens.tolist() for ex in batch_examples],
            "hypotheses": [ex.hypothesis.tokens.tolist() for ex in batch_examples],
        }
        raise TrainingDivergedError(
            f"non-finite loss {obj.l_total} (scl={obj.l_scl}, ce={obj.l_ce})",
            dump=dump)
    for cache, dz, dzn in zip(caches, dZ, dZ_norm):
        model.backward(cache, dz, dzn)
    opt.step()
    return obj


def train(config: TrainConfig, splits, out_dir=None, resume_from=None,
          log_stream=None):
    """Run the full loop over (train, dev, test) splits.

    Keeps the parameter snapshot with the best dev accuracy; evaluates it on
    the test split at the end. Returns (RunReport, PairModel) with the model
    restored to the best snapshot and its classifier replaced by a frozen-rep
    probe when the run itself had no cross-entropy term. With ``out_dir``,
    writes checkpoint.bin, report.json, metrics.jsonl and summary.csv there.
    """
    config.validate()
    train_split, dev_split, test_split = splits
    model = ablation_variant(config)
    opt = Adam(model.params(), lr=config.lr)
    start_epoch = 0
    report = RunReport(config=config.to_dict(), seed=config.seed)
    best = {"acc": -1.0, "epoch": -1, "arrays": None, "probe": None}

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        check_config_match(state.config, config)
        restore_params(model.params(), state.arrays, prefix="param/")
        opt.load_state_arrays(
            {k.removeprefix("state/"): v for k, v in state.arrays.items()
             if k.startswith("state/adam.")},
            t=state.meta["adam_t"])
        start_epoch = state.meta["epoch"] + 1
        best["acc"] = state.meta["best_dev_acc"]
        best["epoch"] = state.meta["best_epoch"]
        best["arrays"] = {k.removeprefix("best/"): v for k, v in state.arrays.items()
                          if k.startswith("best/")}

    t0 = time.perf_counter()
    metrics_lines = []

    def consider_best(acc: float, epoch: int) -> None:
        if acc > best["acc"]:
            best["acc"] = acc
            best["epoch"] = epoch
            best["arrays"] = model.snapshot()

    if config.epochs == 0 and best["arrays"] is None:
        # untrained run: report the initialization-only dev accuracy
        consider_best(_dev_accuracy(model, config, train_split, dev_split), -1)

    for epoch in range(start_epoch, config.epochs):
        te = time.perf_counter()
        seed = _epoch_seed(config.seed, epoch)
        batches = make_batches(train_split, config.batch_size,
                               seed=seed, stratify=config.stratify)
        if not batches:
            raise ConfigError("train: no complete batch; shrink batch_size")
        sums = np.zeros(3)
        skipped = 0
        zero_norms = 0
        for batch_examples in batches:
            obj = _run_batch(model, opt, batch_examples, config)
            sums += (obj.l_scl, obj.l_ce, obj.l_total)
            skipped += obj.skipped_anchors
            zero_norms += obj.zero_norm_reps
        means = sums / len(batches)
        dev_acc = _dev_accuracy(model, config, train_split, dev_split)
        consider_best(dev_acc, epoch)
        record = EpochRecord(
            epoch=epoch, l_scl=means[0], l_ce=means[1], l_total=means[2],
            dev_acc=dev_acc, skipped_anchors=skipped, zero_norm_reps=zero_norms,
            wall_time=time.perf_counter() - te)
        report.epochs.append(record)
        line = json.dumps(asdict(record), sort_keys=True)
        metrics_lines.append(line)
        if log_stream is not None:
            log_stream.write(line + "\n")
        if out_dir is not None:
            save_checkpoint(_ckpt_path(out_dir), model, opt, config,
                            epoch=epoch, best_dev_acc=best["acc"],
                            best_epoch=best["epoch"], best_arrays=best["arrays"])

    if best["arrays"] is None:  # epochs == 0 handled above; resume edge case
        consider_best(_dev_accuracy(model, config, train_split, dev_split),
                      start_epoch - 1)
    report.best_epoch = best["epoch"]
    report.best_dev_acc = best["acc"]

    last_arrays = model.snapshot()
    model.load_snapshot(best["arrays"])
    if config.no_ce:
        # no trained head in this run: score the frozen best representations
        # with a linear probe and store it as the snapshot's classifier
        probe = fit_linear_probe(model.reps(train_split), labels_of(train_split),
                                 config.n_classes, seed=config.seed)
        model.classifier = probe
        for p in probe.params():
            best["arrays"][p.name] = p.value.copy()
    report.test_acc = model.accuracy(test_split)
    report.total_wall_time = time.perf_counter() - t0

    if out_dir is not None:
        final = ablation_variant(config)
        final.load_snapshot(last_arrays)
        save_checkpoint(_ckpt_path(out_dir), final, opt, config,
                        epoch=config.epochs - 1, best_dev_acc=best["acc"],
                        best_epoch=best["epoch"], best_arrays=best["arrays"])
        _write_reports(out_dir, report, metrics_lines)
    return report, model


def _ckpt_path(out_dir):
    import os
    return os.path.join(str(out_dir), "checkpoint.bin")


def _write_reports(out_dir, report: RunReport, metrics_lines) -> None:
    import os
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    with open(os.path.join(out_dir, "metrics.jsonl"), "w", encoding="utf-8") as fh:
        for line in metrics_lines:
            fh.write(line + "\n")
    with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("epoch,l_scl,l_ce,l_total,dev_acc\n")
        for e in report.epochs:
            fh.write(f"{e.epoch},{e.l_scl:.10g},{e.l_ce:.10g},"
                     f"{e.l_total:.10g},{e.dev_acc:.10g}\n")


# ---------------------------------------------------------------------------
# checkpoint container: magic + JSON header + raw little-endian float64 blocks
# ---------------------------------------------------------------------------

@dataclass
class CheckpointState:
    config: TrainConfig
    meta: dict
    arrays: dict[str, np.ndarray]


def save_checkpoint(path, model: PairModel, opt: Adam | None,
                    config: TrainConfig, epoch: int, best_dev_acc: float,
                    best_epoch: int, best_arrays: dict | None) -> None:
    """Write every parameter, the best snapshot, and the Adam state.

    The byte stream is fully determined by its contents (no timestamps):
    identical runs write identical files.
    """
    import os
    os.makedirs(os.path.dirname(os.path.abspath(str(path))), exist_ok=True)
    arrays: dict[str, np.ndarray] = {}
    for p in model.params():
        arrays[f"param/{p.name}"] = p.value
    if best_arrays:
        for name, value in best_arrays.items():
            arrays[f"best/{name}"] = value
    if opt is not None:
        for name, value in opt.state_arrays().items():
            arrays[f"state/{name}"] = value

    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype=np.float64)
        raw = a.astype("<f8").tobytes()
        entries.append({"name": name, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)

    header = {
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "epoch": int(epoch),
        "adam_t": int(opt.t) if opt is not None else 0,
        "best_dev_acc": float(best_dev_acc),
        "best_epoch": int(best_epoch),
        "rep_dim": model.rep_dim,
        "arrays": entries,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(str(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(head).to_bytes(8, "little"))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> CheckpointState:
    with open(str(path), "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        head_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(head_len).decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {header['version']} unsupported "
                f"(expected {CHECKPOINT_VERSION})")
        body = fh.read()
    arrays = {}
    for entry in header["arrays"]:
        raw = body[entry["offset"]: entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"{path}: truncated tensor {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(
            entry["shape"]).astype(np.float64)
    cfg_dict = dict(header["config"])
    if cfg_dict.get("d") is not None:
        cfg_dict["d"] = int(cfg_dict["d"])
    config = TrainConfig.from_dict(cfg_dict)
    meta = {k: header[k] for k in
            ("version", "epoch", "adam_t", "best_dev_acc", "best_epoch", "rep_dim")}
    return CheckpointState(config=config, meta=meta, arrays=arrays)


def check_config_match(saved: TrainConfig, requested: TrainConfig) -> None:
    """Resuming requires an identical config except for the epoch budget
    (training further than the interrupted run is legitimate)."""
    a, b = saved.to_dict(), requested.to_dict()
    diff = {key: (a[key], b[key]) for key in a
            if key != "epochs" and a[key] != b[key]}
    if diff:
        raise CheckpointError(f"checkpoint config differs from requested: {diff}")


def model_from_checkpoint(path_or_state, use_best: bool = True) -> PairModel:
    """Rebuild a model from a checkpoint, loading the best snapshot by default."""
    state = (path_or_state if isinstance(path_or_state, CheckpointState)
             else load_checkpoint(path_or_state))
    model = PairModel(state.config)
    prefix = "best/" if use_best and any(k.startswith("best/") for k in state.arrays) \
        else "param/"
    restore_params(model.params(), state.arrays, prefix=prefix)
    return model
