"""Finite-difference verification of the full model's analytic gradients.

Builds a small seeded model, runs the combined loss on a short random batch,
and compares every parameter gradient against central finite differences.
Points that land too close to a ReLU kink or a max-pool tie are resampled,
since the loss is not differentiable there.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .crossattn import normalize_seq
from .data import Example
from .encoder import TokenSeq
from .errors import KinkPointError
from .objectives import Batch, total_loss
from .tensor import FD_STEP, GradCheckReport, rel_error
from .train import PairModel, TrainConfig

KINK_MARGIN = 1e-3
# rows whose pre-layer-norm variance sits between 0 and this are too close to
# the 1/sqrt(var + eps) pole: the loss is differentiable there but so curved
# that an h=1e-5 central difference is truncation-dominated. Variance exactly
# 0 is fine (all ReLU units off, locally constant).
LN_VAR_MARGIN = 1e-3

CHECK_CONFIG = TrainConfig(k=4, d=3, vocab_size=20, max_len=8, n_classes=3,
                           batch_size=4, epochs=0)

GROUPS = ("encoder", "crossattn", "classifier")


def _random_batch(config: TrainConfig, rng: np.random.Generator, size: int = 4):
    examples = []
    labels = [0, 0, 1, 2][:size]  # anchors of class 2 have no positives on purpose
    for y in labels:
        m = int(rng.integers(2, 4))
        n = int(rng.integers(2, 4))
        premise = rng.integers(1, config.vocab_size, size=m).tolist()
        hypothesis = rng.integers(1, config.vocab_size, size=n).tolist()
        examples.append(Example(
            premise=TokenSeq.from_ids(premise, config.max_len),
            hypothesis=TokenSeq.from_ids(hypothesis, config.max_len),
            label=y))
    return examples


def _assert_differentiable(model: PairModel, caches) -> None:
    """Reject points near ReLU kinks, max-pool ties, or the layer-norm
    variance pole."""
    for cache in caches:
        if model.crossattn is not None:
            for enh_cache in (cache.enh_cache_p, cache.enh_cache_h):
                pre = enh_cache[1]
                if np.any(np.abs(pre) < KINK_MARGIN):
                    raise KinkPointError("ReLU pre-activation near zero")
            for mat in (cache.enh_p, cache.enh_h):
                row_var = mat.var(axis=1)
                if np.any((row_var > 0) & (row_var < LN_VAR_MARGIN)):
                    raise KinkPointError("layer-norm input row variance near eps")
            pooled = (normalize_seq(cache.enh_p, model.crossattn),
                      normalize_seq(cache.enh_h, model.crossattn))
        else:  # pooled-concat wiring pools raw encoder states
            pooled = (cache.sp, cache.sh)
        for mat in pooled:
            if mat.shape[0] >= 2:
                top2 = np.sort(mat, axis=0)[-2:]
                if np.any(top2[1] - top2[0] < KINK_MARGIN):
                    raise KinkPointError("max-pool tie")


def _batch_loss(model: PairModel, examples, config: TrainConfig,
                want_caches: bool = False):
    reps = []
    caches = []
    for ex in examples:
        rep, cache = model.forward(ex)
        reps.append(rep)
        caches.append(cache)
    batch = Batch(reps=reps, labels=np.array([ex.label for ex in examples]))
    obj, dZ, dZ_norm = total_loss(batch, tau=config.tau, alpha=config.alpha,
                                  params=model.classifier)
    if want_caches:
        return obj, dZ, dZ_norm, caches
    return obj.l_total


@dataclass
class GroupResult:
    group: str
    max_rel_err: float
    n_entries: int
    passed: bool


def check_model_gradients(seed: int, config: TrainConfig | None = None,
                          tol: float = 1e-5, step: float = FD_STEP):
    """One gradient check at one seeded point.

    Returns a list of GroupResult, one per parameter group. Raises
    KinkPointError when the sampled point is not differentiable.
    """
    config = CHECK_CONFIG if config is None else config
    cfg = replace(config, seed=seed)
    model = PairModel(cfg)
    rng = np.random.default_rng(seed + 7919)
    examples = _random_batch(cfg, rng, size=cfg.batch_size)

    obj, dZ, dZ_norm, caches = _batch_loss(model, examples, cfg, want_caches=True)
    _assert_differentiable(model, caches)

    model.zero_grads()
    # the classifier gradient lands during the loss itself
    _batch_loss(model, examples, cfg)
    for cache, dz, dzn in zip(caches, dZ, dZ_norm):
        model.backward(cache, dz, dzn)
    # snapshot: every further loss evaluation below keeps accumulating into
    # the classifier's live grad buffers
    analytic = {p.name: p.grad.copy() for p in model.params()}

    results = []
    for group in GROUPS:
        if group == "crossattn" and model.crossattn is None:
            continue
        holder = getattr(model, group)
        worst = 0.0
        n_entries = 0
        for p in holder.params():
            flat = p.value.reshape(-1)
            fd = np.zeros_like(flat)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + step
                up = _batch_loss(model, examples, cfg)
                flat[j] = orig - step
                down = _batch_loss(model, examples, cfg)
                flat[j] = orig
                fd[j] = (up - down) / (2.0 * step)
            worst = max(worst, rel_error(analytic[p.name].reshape(-1), fd))
            n_entries += flat.size
        results.append(GroupResult(group=group, max_rel_err=worst,
                                   n_entries=n_entries, passed=worst < tol))
    return results


def run_suite(seed: int = 0, points: int = 20, tol: float = 1e-5,
              config: TrainConfig | None = None, progress=None):
    """Gradient checks at ``points`` seeded differentiable points.

    Kink points are skipped and replaced deterministically by advancing the
    seed. Returns {group: GradCheckReport} with the worst error per group.
    """
    worst = {group: 0.0 for group in GROUPS}
    entries = {group: 0 for group in GROUPS}
    done = 0
    attempt = 0
    while done < points:
        point_seed = seed + attempt
        attempt += 1
        if attempt > 20 * points:
            raise KinkPointError("gradcheck: too many kink points; widen the margin")
        try:
            results = check_model_gradients(point_seed, config=config, tol=tol)
        except KinkPointError:
            continue
        for res in results:
            worst[res.group] = max(worst[res.group], res.max_rel_err)
            entries[res.group] += res.n_entries
        done += 1
        if progress is not None:
            progress.write(f"point {done}/{points} (seed {point_seed}): "
                           + " ".join(f"{r.group}={r.max_rel_err:.2e}" for r in results)
                           + "\n")
    return {group: GradCheckReport(name=group, max_rel_err=worst[group], tol=tol,
                                   passed=worst[group] < tol,
                                   n_entries=entries[group])
            for group in GROUPS if entries[group]}
