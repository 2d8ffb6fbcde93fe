"""Scikit-learn style facade over the pair classifier.

``PairClassifier`` follows the estimator contract (fit/predict/transform,
get_params/set_params, clone-compatible constructor) so the model composes
with pipelines, grid search, and cross-validation. X is a sequence of
(premise, hypothesis) pairs, each side either a string or a sequence of
token ids; y holds arbitrary hashable labels (mapped onto ``classes_``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .data import Example, build_vocab, tokenize
from .encoder import TokenSeq
from .objectives import predict_logits
from .train import TrainConfig, train


def check_pair_input(X):
    """Validate X as a non-empty sequence of 2-element (premise, hypothesis)
    pairs of uniform kind (all text or all token ids). Returns (pairs, is_text)."""
    pairs = list(X)
    if not pairs:
        raise ValueError("X must contain at least one sentence pair")
    norm = []
    kinds = set()
    for i, item in enumerate(pairs):
        pair = tuple(item)
        if len(pair) != 2:
            raise ValueError(f"X[{i}] must be a (premise, hypothesis) pair, "
                             f"got {len(pair)} elements")
        for side in pair:
            if isinstance(side, str):
                kinds.add("text")
                if not side.strip():
                    raise ValueError(f"X[{i}] contains an empty sentence")
            else:
                kinds.add("ids")
                ids = np.asarray(side)
                if ids.ndim != 1 or ids.size == 0:
                    raise ValueError(f"X[{i}] token ids must be a non-empty 1-D sequence")
                if not np.issubdtype(ids.dtype, np.integer):
                    raise ValueError(f"X[{i}] token ids must be integers")
                if ids.min() < 0:
                    raise ValueError(f"X[{i}] token ids must be non-negative")
        norm.append(pair)
    if len(kinds) != 1:
        raise ValueError("X mixes text and token-id pairs; use one kind")
    return norm, kinds.pop() == "text"


def check_labels(y, n: int):
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"y must be 1-D with {n} entries, got shape {y.shape}")
    return y


class PairClassifier(BaseEstimator, ClassifierMixin, TransformerMixin):
    """Sentence-pair classifier with a cross-attention pair representation
    trained under a joint contrastive + cross-entropy objective.

    Parameters mirror the training configuration; ablation switches
    (``no_scl``, ``no_ce``, ``no_crossattn``) select reduced variants.
    ``validation_fraction`` carves a stratified tail off the training data
    for best-epoch selection; 0 selects on training accuracy.
    """

    def __init__(self, k=16, d=None, vocab_size=200, max_len=24, epochs=10,
                 batch_size=64, tau=0.05, alpha=1.0, lr=2e-3, no_scl=False,
                 no_ce=False, no_crossattn=False, stratify=True,
                 validation_fraction=0.0, seed=0):
        self.k = k
        self.d = d
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.tau = tau
        self.alpha = alpha
        self.lr = lr
        self.no_scl = no_scl
        self.no_ce = no_ce
        self.no_crossattn = no_crossattn
        self.stratify = stratify
        self.validation_fraction = validation_fraction
        self.seed = seed

    # -- internal -----------------------------------------------------------

    def _to_examples(self, pairs, is_text, labels):
        examples = []
        for (p, h), y in zip(pairs, labels):
            if is_text:
                premise = tokenize(p, self.vocab_, self.max_len)
                hypothesis = tokenize(h, self.vocab_, self.max_len)
            else:
                premise = TokenSeq.from_ids(list(p)[: self.max_len], self.max_len)
                hypothesis = TokenSeq.from_ids(list(h)[: self.max_len], self.max_len)
                top = max(premise.tokens.max(), hypothesis.tokens.max())
                if top >= self.vocab_size_:
                    raise ValueError(
                        f"token id {top} outside vocab_size {self.vocab_size_}")
            examples.append(Example(premise=premise, hypothesis=hypothesis, label=int(y)))
        return examples

    # -- estimator API ------------------------------------------------------

    def fit(self, X, y):
        pairs, is_text = check_pair_input(X)
        y = check_labels(y, len(pairs))
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("fit needs at least 2 classes")

        if is_text:
            corpus = [s for pair in pairs for s in pair]
            self.vocab_ = build_vocab(corpus, max_size=self.vocab_size)
            self.vocab_size_ = len(self.vocab_)
        else:
            self.vocab_ = None
            self.vocab_size_ = self.vocab_size

        examples = self._to_examples(pairs, is_text, y_idx)

        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")
        if self.validation_fraction > 0.0:
            rng = np.random.default_rng(self.seed)
            order = rng.permutation(len(examples))
            n_dev = max(1, int(len(examples) * self.validation_fraction))
            dev = [examples[i] for i in order[:n_dev]]
            train_split = [examples[i] for i in order[n_dev:]]
        else:
            dev = examples
            train_split = examples

        config = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, tau=self.tau,
            alpha=self.alpha, lr=self.lr, seed=self.seed, no_scl=self.no_scl,
            no_ce=self.no_ce, no_crossattn=self.no_crossattn,
            stratify=self.stratify, k=self.k, d=self.d,
            vocab_size=self.vocab_size_, max_len=self.max_len,
            n_classes=len(self.classes_))
        self.report_, self.model_ = train(config, (train_split, dev, dev))
        return self

    def _examples_for_predict(self, X):
        if not hasattr(self, "model_"):
            raise ValueError("PairClassifier is not fitted yet; call fit first")
        pairs, is_text = check_pair_input(X)
        if is_text and self.vocab_ is None:
            raise ValueError("model was fitted on token ids but X contains text")
        if not is_text and self.vocab_ is not None:
            raise ValueError("model was fitted on text but X contains token ids")
        return self._to_examples(pairs, is_text, np.zeros(len(pairs), dtype=int))

    def predict_proba(self, X):
        examples = self._examples_for_predict(X)
        logits = predict_logits(self.model_.reps(examples), self.model_.classifier)
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    def transform(self, X):
        """Unit-norm pair representations, one row per pair."""
        examples = self._examples_for_predict(X)
        return self.model_.norm_reps(examples)
