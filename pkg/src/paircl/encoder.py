"""Trainable token encoder: embedding + position table + one tanh mixing layer.

Maps a padded token sequence to per-token hidden states of width k. Padded
positions are dropped from the output, so downstream modules only ever see
real tokens. The PAD embedding (row 0) is frozen at zero and never receives
gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, VocabularyError
from .tensor import Param

PAD_ID = 0


@dataclass(frozen=True)
class TokenSeq:
    """Integer token ids padded to a fixed width.

    ``ids`` has length ``max_len``; the first ``length`` entries are real
    tokens, the rest are PAD (0).
    """

    ids: np.ndarray
    length: int

    def __post_init__(self):
        object.__setattr__(self, "ids", np.asarray(self.ids, dtype=np.int64))
        if self.length < 1:
            raise DegenerateInputError("TokenSeq: length must be >= 1")
        if self.length > self.ids.size:
            raise DegenerateInputError(
                f"TokenSeq: length {self.length} exceeds padded width {self.ids.size}")
        if np.any(self.ids[self.length:] != PAD_ID):
            raise DegenerateInputError("TokenSeq: padded positions must hold the PAD id")
        if np.any(self.ids < 0):
            raise VocabularyError("TokenSeq: negative token id")

    @property
    def max_len(self) -> int:
        return self.ids.size

    @property
    def tokens(self) -> np.ndarray:
        """The real (unpadded) token ids."""
        return self.ids[: self.length]

    @staticmethod
    def from_ids(ids, max_len: int) -> "TokenSeq":
        ids = list(ids)
        if len(ids) > max_len:
            raise DegenerateInputError(
                f"TokenSeq: {len(ids)} tokens exceed max_len {max_len}")
        padded = np.full(max_len, PAD_ID, dtype=np.int64)
        padded[: len(ids)] = ids
        return TokenSeq(ids=padded, length=len(ids))


class EncoderParams:
    """token_table (vocab × k), pos_table (max_len × k), mixing layer (k × k)."""

    def __init__(self, token_table: Param, pos_table: Param, mix_w: Param, mix_b: Param):
        self.token_table = token_table
        self.pos_table = pos_table
        self.mix_w = mix_w
        self.mix_b = mix_b

    @property
    def vocab_size(self) -> int:
        return self.token_table.value.shape[0]

    @property
    def k(self) -> int:
        return self.token_table.value.shape[1]

    @property
    def max_len(self) -> int:
        return self.pos_table.value.shape[0]

    def params(self) -> list[Param]:
        return [self.token_table, self.pos_table, self.mix_w, self.mix_b]


def init_encoder(vocab_size: int, k: int, max_len: int, seed: int) -> EncoderParams:
    """Seeded uniform init in [-1/sqrt(k), +1/sqrt(k)]; PAD row zeroed."""
    if min(vocab_size, k, max_len) < 1:
        raise DegenerateInputError("init_encoder: all sizes must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(k)

    def draw(*shape):
        return rng.uniform(-bound, bound, size=shape)

    token_table = draw(vocab_size, k)
    token_table[PAD_ID] = 0.0
    return EncoderParams(
        token_table=Param("encoder.token_table", token_table),
        pos_table=Param("encoder.pos_table", draw(max_len, k)),
        mix_w=Param("encoder.mix_w", draw(k, k)),
        mix_b=Param("encoder.mix_b", draw(k)),
    )


def encode(seq: TokenSeq, params: EncoderParams) -> np.ndarray:
    """Hidden states for the real tokens of ``seq``, one row per token.

    states[i] = tanh(mix_w @ (token_table[ids[i]] + pos_table[i]) + mix_b)
    """
    ids = seq.tokens
    if np.any(ids >= params.vocab_size):
        bad = int(ids[ids >= params.vocab_size][0])
        raise VocabularyError(
            f"encode: token id {bad} outside vocabulary of size {params.vocab_size}")
    if seq.length > params.max_len:
        raise DegenerateInputError(
            f"encode: sequence length {seq.length} exceeds position table {params.max_len}")
    embedded = params.token_table.value[ids] + params.pos_table.value[: seq.length]
    return np.tanh(embedded @ params.mix_w.value.T + params.mix_b.value)


def encode_backward(dstates: np.ndarray, seq: TokenSeq, states: np.ndarray,
                    params: EncoderParams) -> None:
    """Accumulate encoder gradients for one sequence. The PAD row of the
    token table is explicitly kept at zero gradient."""
    ids = seq.tokens
    embedded = params.token_table.value[ids] + params.pos_table.value[: seq.length]
    dpre = dstates * (1.0 - states * states)
    params.mix_w.grad += dpre.T @ embedded
    params.mix_b.grad += dpre.sum(axis=0)
    dembedded = dpre @ params.mix_w.value
    np.add.at(params.token_table.grad, ids, dembedded)
    params.token_table.grad[PAD_ID] = 0.0
    params.pos_table.grad[: seq.length] += dembedded
