"""Batch objectives: supervised contrastive loss, cross-entropy head, and
their weighted combination, all with analytic gradients.

The contrastive term treats same-label batch members as positives. For an
anchor i with positive set P_i and temperature tau:

    l(i, p)  = exp(Z_i · Z_p / tau) / sum_{k != i} exp(Z_i · Z_k / tau)
    L_scl    = sum_i -log( (1/|P_i|) sum_{p in P_i} l(i, p) )

computed on unit-norm pair vectors with log-sum-exp stabilization. Anchors
with an empty positive set contribute 0 and are counted. The cross-entropy
head runs on the raw (unnormalized) pair vectors and is a batch mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crossattn import PairRep
from .errors import DegenerateInputError, ParameterError, ShapeError
from .tensor import Param

DEFAULT_TAU = 0.05
DEFAULT_ALPHA = 1.0


@dataclass
class Batch:
    """K pair representations with integer class labels."""

    reps: list[PairRep]
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.reps) != self.labels.shape[0]:
            raise ShapeError(
                f"Batch: {len(self.reps)} reps vs {self.labels.shape[0]} labels")

    @property
    def size(self) -> int:
        return len(self.reps)

    def z_matrix(self) -> np.ndarray:
        return np.stack([r.z for r in self.reps])

    def z_norm_matrix(self) -> np.ndarray:
        return np.stack([r.z_norm for r in self.reps])


@dataclass
class Objectives:
    """Loss components for one batch; l_total = l_scl + alpha * l_ce."""

    l_scl: float
    l_ce: float
    l_total: float
    alpha: float
    tau: float
    skipped_anchors: int = 0
    zero_norm_reps: int = 0


class ClassifierParams:
    """Linear classification head over the raw pair vector."""

    def __init__(self, W_cls: Param, b_cls: Param):
        self.W_cls = W_cls
        self.b_cls = b_cls

    @property
    def n_classes(self) -> int:
        return self.W_cls.value.shape[0]

    @property
    def in_dim(self) -> int:
        return self.W_cls.value.shape[1]

    def params(self) -> list[Param]:
        return [self.W_cls, self.b_cls]


def init_classifier(n_classes: int, in_dim: int, seed: int) -> ClassifierParams:
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(in_dim)
    return ClassifierParams(
        W_cls=Param("classifier.W_cls", rng.uniform(-bound, bound, size=(n_classes, in_dim))),
        b_cls=Param("classifier.b_cls", np.zeros(n_classes)),
    )


def _masked_logsumexp(row: np.ndarray, mask: np.ndarray) -> float:
    vals = row[mask]
    m = vals.max()
    return m + np.log(np.exp(vals - m).sum())


def scl_loss_from_similarities(sims: np.ndarray, labels: np.ndarray,
                               mean_of_log: bool = False):
    """Contrastive loss from a precomputed (K × K) similarity-logit matrix.

    Returns (loss, dsims, skipped_anchors). The diagonal is ignored. The
    default combines positives inside the log (log-of-mean, as the batch loss
    is defined); ``mean_of_log`` switches to averaging the per-positive logs.
    """
    K = sims.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    not_self = ~np.eye(K, dtype=bool)
    pos_mask = (labels[:, None] == labels[None, :]) & not_self

    loss = 0.0
    dsims = np.zeros_like(sims)
    skipped = 0
    for i in range(K):
        n_pos = int(pos_mask[i].sum())
        if n_pos == 0:
            skipped += 1
            continue
        lse_all = _masked_logsumexp(sims[i], not_self[i])
        # softmax over all non-self entries of row i
        q = np.zeros(K)
        q[not_self[i]] = np.exp(sims[i][not_self[i]] - lse_all)
        if mean_of_log:
            loss += lse_all - sims[i][pos_mask[i]].mean()
            r = pos_mask[i] / n_pos
            dsims[i] += q - r
        else:
            lse_pos = _masked_logsumexp(sims[i], pos_mask[i])
            loss += lse_all - lse_pos + np.log(n_pos)
            r = np.zeros(K)
            r[pos_mask[i]] = np.exp(sims[i][pos_mask[i]] - lse_pos)
            dsims[i] += q - r
    return loss, dsims, skipped


def scl_loss(batch: Batch, tau: float = DEFAULT_TAU, mean_of_log: bool = False):
    """Supervised contrastive loss on the batch's unit-norm pair vectors.

    Returns (loss, grads, skipped_anchors) with ``grads`` a (K × D) array of
    gradients w.r.t. each z_norm.
    """
    if tau <= 0:
        raise ParameterError(f"scl_loss: tau must be > 0, got {tau}")
    if batch.size < 2:
        raise DegenerateInputError(
            f"scl_loss: batch of size {batch.size} has no contrast")
    Z = batch.z_norm_matrix()
    sims = (Z @ Z.T) / tau
    loss, dsims, skipped = scl_loss_from_similarities(sims, batch.labels,
                                                      mean_of_log=mean_of_log)
    dZ = (dsims + dsims.T) @ Z / tau
    return loss, dZ, skipped


def ce_loss(batch: Batch, params: ClassifierParams, weight: float = 1.0):
    """Mean cross-entropy of the linear head on raw pair vectors.

    Returns (loss, dZ). The returned loss is unweighted; all gradients
    (including those accumulated into ``params``) are scaled by ``weight`` so
    the combined objective can weight this term.
    """
    Z = batch.z_matrix()
    y = batch.labels
    if Z.shape[1] != params.in_dim:
        raise ShapeError(
            f"ce_loss: rep width {Z.shape[1]} vs classifier input {params.in_dim}")
    if np.any(y < 0) or np.any(y >= params.n_classes):
        raise ParameterError(
            f"ce_loss: labels must lie in [0, {params.n_classes}), got {y}")
    K = batch.size
    logits = Z @ params.W_cls.value.T + params.b_cls.value
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(K), y].mean()

    dlogits = np.exp(log_probs)
    dlogits[np.arange(K), y] -= 1.0
    dlogits *= weight / K
    params.W_cls.grad += dlogits.T @ Z
    params.b_cls.grad += dlogits.sum(axis=0)
    return loss, dlogits @ params.W_cls.value


def predict_logits(Z: np.ndarray, params: ClassifierParams) -> np.ndarray:
    return Z @ params.W_cls.value.T + params.b_cls.value


def total_loss(batch: Batch, tau: float, alpha: float, params: ClassifierParams,
               no_scl: bool = False, no_ce: bool = False,
               mean_of_log: bool = False):
    """Combined objective L = L_scl + alpha * L_ce with ablation switches.

    Returns (Objectives, dZ, dZ_norm) where the two gradient arrays are
    w.r.t. raw and unit-norm pair vectors respectively.
    """
    if no_scl and no_ce:
        raise ParameterError("total_loss: both loss terms disabled")
    D = batch.reps[0].z.shape[0] if batch.size else 0
    dZ = np.zeros((batch.size, D))
    dZ_norm = np.zeros((batch.size, D))
    l_scl = 0.0
    l_ce = 0.0
    skipped = 0
    if not no_scl:
        l_scl, dZ_norm, skipped = scl_loss(batch, tau, mean_of_log=mean_of_log)
    if not no_ce:
        l_ce, d_ce = ce_loss(batch, params, weight=alpha)
        dZ += d_ce
    l_total = l_scl + alpha * l_ce
    obj = Objectives(l_scl=l_scl, l_ce=l_ce, l_total=l_total, alpha=alpha,
                     tau=tau, skipped_anchors=skipped,
                     zero_norm_reps=sum(r.zero_norm for r in batch.reps))
    return obj, dZ, dZ_norm
