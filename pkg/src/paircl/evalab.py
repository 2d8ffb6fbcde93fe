"""Evaluation, ablation sweeps, and representation-geometry diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import labels_of
from .errors import DegenerateInputError
from .train import PairModel, TrainConfig, model_from_checkpoint, train


@dataclass
class EvalReport:
    """Forward-only metrics on one split.

    The confusion matrix is indexed [true, predicted]; row sums equal the
    per-class support and the trace over the total equals the accuracy.
    """

    accuracy: float
    precision: list[float]
    recall: list[float]
    confusion: list[list[int]]
    intra_cosine: float
    inter_cosine: float
    n_examples: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)

    def table(self) -> str:
        lines = [f"accuracy        {self.accuracy:.3f}   (n={self.n_examples})"]
        for c, (p, r) in enumerate(zip(self.precision, self.recall)):
            lines.append(f"class {c}: precision {p:.3f}  recall {r:.3f}")
        lines.append("confusion (rows=true, cols=predicted):")
        for row in self.confusion:
            lines.append("  " + " ".join(f"{v:6d}" for v in row))
        lines.append(f"cosine intra {self.intra_cosine:.4f}  "
                     f"inter {self.inter_cosine:.4f}")
        return "\n".join(lines)


def _cosine_means(norm_reps: np.ndarray, labels: np.ndarray):
    """Mean pairwise cosine within classes and across classes (i < j pairs)."""
    cos = norm_reps @ norm_reps.T
    same = labels[:, None] == labels[None, :]
    upper = np.triu(np.ones_like(same, dtype=bool), k=1)
    intra_mask = same & upper
    inter_mask = ~same & upper
    intra = float(cos[intra_mask].mean()) if intra_mask.any() else float("nan")
    inter = float(cos[inter_mask].mean()) if inter_mask.any() else float("nan")
    return intra, inter


def evaluate(model_or_checkpoint, split) -> EvalReport:
    """Deterministic forward-only evaluation; no parameter mutation."""
    model = (model_or_checkpoint if isinstance(model_or_checkpoint, PairModel)
             else model_from_checkpoint(model_or_checkpoint))
    n_classes = model.config.n_classes
    labels = labels_of(split)

    raw = model.reps(split)
    norm = raw / np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1e-300)
    logits = raw @ model.classifier.W_cls.value.T + model.classifier.b_cls.value
    preds = logits.argmax(axis=1)

    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)
    support = confusion.sum(axis=1)
    predicted = confusion.sum(axis=0)
    diag = np.diag(confusion)
    precision = np.divide(diag, predicted, out=np.zeros(n_classes), where=predicted > 0)
    recall = np.divide(diag, support, out=np.zeros(n_classes), where=support > 0)
    intra, inter = _cosine_means(norm, labels)

    return EvalReport(
        accuracy=float(diag.sum() / len(split)),
        precision=[float(p) for p in precision],
        recall=[float(r) for r in recall],
        confusion=confusion.tolist(),
        intra_cosine=intra,
        inter_cosine=inter,
        n_examples=len(split),
    )


def separation_metrics(model_or_checkpoint, split):
    """(intra, inter) mean cosine of unit-norm pair vectors. Every class must
    have at least 2 members."""
    model = (model_or_checkpoint if isinstance(model_or_checkpoint, PairModel)
             else model_from_checkpoint(model_or_checkpoint))
    labels = labels_of(split)
    counts = np.bincount(labels, minlength=model.config.n_classes)
    if np.any(counts < 2):
        raise DegenerateInputError(
            f"separation_metrics: every class needs >= 2 examples, got {counts.tolist()}")
    return _cosine_means(model.norm_reps(split), labels)


# ---------------------------------------------------------------------------
# ablation sweep
# ---------------------------------------------------------------------------

VARIANTS = ("full", "no_ce", "no_scl", "no_crossattn")


@dataclass
class SweepRow:
    variant: str
    dev_accs: list[float]
    test_accs: list[float]
    rep_dim: int

    @property
    def dev_mean(self) -> float:
        return float(np.mean(self.dev_accs))

    @property
    def dev_std(self) -> float:
        return float(np.std(self.dev_accs))


@dataclass
class SweepTable:
    seeds: list[int]
    rows: list[SweepRow] = field(default_factory=list)

    def row(self, variant: str) -> SweepRow:
        return next(r for r in self.rows if r.variant == variant)

    def to_json(self) -> str:
        return json.dumps({
            "seeds": self.seeds,
            "rows": [r.__dict__ for r in self.rows],
        }, sort_keys=True, indent=2)

    def table(self) -> str:
        lines = [f"ablation over seeds {self.seeds}",
                 f"{'variant':<14} {'dev acc':>18} {'per-seed':<30} rep_dim"]
        for r in self.rows:
            per_seed = " ".join(f"{a:.3f}" for a in r.dev_accs)
            lines.append(f"{r.variant:<14} {r.dev_mean:>8.3f} ± {r.dev_std:<7.3f} "
                         f"{per_seed:<30} {r.rep_dim}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["variant,seed,dev_acc,test_acc"]
        for r in self.rows:
            for seed, dev, test in zip(self.seeds, r.dev_accs, r.test_accs):
                lines.append(f"{r.variant},{seed},{dev:.6f},{test:.6f}")
        return "\n".join(lines) + "\n"


def variant_config(base: TrainConfig, variant: str, seed: int) -> TrainConfig:
    if variant not in VARIANTS:
        raise DegenerateInputError(f"unknown ablation variant {variant!r}")
    flags = {"no_scl": variant == "no_scl", "no_ce": variant == "no_ce",
             "no_crossattn": variant == "no_crossattn"}
    return replace(base, seed=seed, **flags)


def ablation_sweep(base: TrainConfig, seeds, splits,
                   progress=None) -> SweepTable:
    """Train {full, -CE, -SCL, -crossattn} per seed and tabulate dev/test
    accuracy (mean ± stdev across seeds, never a single-run point estimate)."""
    seeds = list(seeds)
    if not seeds:
        raise DegenerateInputError("ablation_sweep: need at least one seed")
    table = SweepTable(seeds=seeds)
    for variant in VARIANTS:
        dev_accs = []
        test_accs = []
        rep_dim = 0
        for seed in seeds:
            cfg = variant_config(base, variant, seed)
            report, model = train(cfg, splits)
            dev_accs.append(report.best_dev_acc)
            test_accs.append(report.test_acc)
            rep_dim = model.rep_dim
            if progress is not None:
                progress.write(f"{variant} seed={seed} dev={report.best_dev_acc:.3f} "
                               f"test={report.test_acc:.3f}\n")
        table.rows.append(SweepRow(variant=variant, dev_accs=dev_accs,
                                   test_accs=test_accs, rep_dim=rep_dim))
    return table
