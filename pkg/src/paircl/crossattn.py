"""Cross attention over a sentence pair and aggregation into one vector.

Pipeline per pair: token-level co-attention scores between the two sentences,
softmax alignment in both directions, local-inference enhancement
[s; s'; s - s'; s ⊙ s'] through a shared ReLU projection, per-token layer
norm, mean+max pooling per side, and a final 4-block combination
[a_p; a_h; a_p - a_h; a_p ⊙ a_h] of the pooled vectors.

Every stage carries a hand-written backward; ``backward_pair`` walks the
cached intermediates in reverse and accumulates parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import EncoderParams, TokenSeq, encode, encode_backward
from .errors import DegenerateInputError
from .tensor import (
    Param,
    layer_norm,
    layer_norm_backward,
    max_over_rows,
    max_over_rows_backward,
    mean_over_rows,
    mean_over_rows_backward,
    relu,
    relu_backward,
    softmax,
    softmax_backward,
)

LN_EPS = 1e-5


class CrossAttnParams:
    """Co-attention projection (W: d × k, P: d), shared enhancement layer
    (W_enh: k × 4k, b_enh: k) and layer-norm scale/shift (k each)."""

    def __init__(self, W: Param, P: Param, W_enh: Param, b_enh: Param,
                 ln_gamma: Param, ln_beta: Param):
        self.W = W
        self.P = P
        self.W_enh = W_enh
        self.b_enh = b_enh
        self.ln_gamma = ln_gamma
        self.ln_beta = ln_beta

    @property
    def k(self) -> int:
        return self.W.value.shape[1]

    @property
    def d(self) -> int:
        return self.W.value.shape[0]

    def params(self) -> list[Param]:
        return [self.W, self.P, self.W_enh, self.b_enh, self.ln_gamma, self.ln_beta]


def init_crossattn(k: int, d: int, seed: int) -> CrossAttnParams:
    """Seeded uniform init scaled by fan-in; layer norm starts as identity."""
    if min(k, d) < 1:
        raise DegenerateInputError("init_crossattn: k and d must be >= 1")
    rng = np.random.default_rng(seed)
    bk = 1.0 / np.sqrt(k)
    b4k = 1.0 / np.sqrt(4 * k)
    return CrossAttnParams(
        W=Param("crossattn.W", rng.uniform(-bk, bk, size=(d, k))),
        P=Param("crossattn.P", rng.uniform(-bk, bk, size=d)),
        W_enh=Param("crossattn.W_enh", rng.uniform(-b4k, b4k, size=(k, 4 * k))),
        b_enh=Param("crossattn.b_enh", np.zeros(k)),
        ln_gamma=Param("crossattn.ln_gamma", np.ones(k)),
        ln_beta=Param("crossattn.ln_beta", np.zeros(k)),
    )


@dataclass
class PairRep:
    """Fixed-width pair representation. ``z`` feeds the classifier; ``z_norm``
    is the unit-length copy used by the contrastive objective. A zero-norm
    ``z`` keeps ``z_norm == z`` and is flagged."""

    z: np.ndarray
    z_norm: np.ndarray
    zero_norm: bool = False


# ---------------------------------------------------------------------------
# individual stages
# ---------------------------------------------------------------------------

def coattention(sp: np.ndarray, sh: np.ndarray, params: CrossAttnParams):
    """Token-relevance matrix C (m × n): C[i, j] = P · tanh(W (sp_i ⊙ sh_j)).

    Returns (C, cache) where the cache holds the elementwise products and the
    tanh activations needed by the backward pass.
    """
    if sp.shape[0] == 0 or sh.shape[0] == 0:
        raise DegenerateInputError("coattention: empty sequence")
    prod = sp[:, None, :] * sh[None, :, :]                 # (m, n, k)
    act = np.tanh(prod @ params.W.value.T)                 # (m, n, d)
    scores = act @ params.P.value                          # (m, n)
    return scores, (prod, act)


def coattention_backward(dscores: np.ndarray, sp: np.ndarray, sh: np.ndarray,
                         cache, params: CrossAttnParams):
    """Returns (dsp, dsh) and accumulates into W and P."""
    prod, act = cache
    params.P.grad += np.einsum("ij,ija->a", dscores, act)
    dact = dscores[:, :, None] * params.P.value
    dpre = dact * (1.0 - act * act)
    params.W.grad += np.einsum("ija,ijb->ab", dpre, prod)
    dprod = dpre @ params.W.value                          # (m, n, k)
    dsp = np.einsum("ijk,jk->ik", dprod, sh)
    dsh = np.einsum("ijk,ik->jk", dprod, sp)
    return dsp, dsh


def align(scores: np.ndarray, sp: np.ndarray, sh: np.ndarray):
    """Soft alignment in both directions.

    Each premise token gets a convex combination of hypothesis states via a
    row softmax of the score matrix, and symmetrically via a column softmax
    for the hypothesis side. Returns (sp_att, sh_att, cache).
    """
    if scores.shape != (sp.shape[0], sh.shape[0]):
        raise DegenerateInputError(
            f"align: score shape {scores.shape} does not match lengths "
            f"({sp.shape[0]}, {sh.shape[0]})")
    attn_p = softmax(scores)            # rows: premise token → hypothesis weights
    attn_h = softmax(scores.T).T        # cols: hypothesis token → premise weights
    sp_att = attn_p @ sh
    sh_att = attn_h.T @ sp
    return sp_att, sh_att, (attn_p, attn_h)


def align_backward(dsp_att: np.ndarray, dsh_att: np.ndarray, sp: np.ndarray,
                   sh: np.ndarray, cache):
    """Returns (dscores, dsp, dsh)."""
    attn_p, attn_h = cache
    dattn_p = dsp_att @ sh.T                               # (m, n)
    dsh = attn_p.T @ dsp_att
    dattn_h = (dsh_att @ sp.T).T                           # (m, n)
    dsp = attn_h @ dsh_att
    dscores = softmax_backward(dattn_p, attn_p)
    dscores += softmax_backward(dattn_h.T, attn_h.T).T
    return dscores, dsp, dsh


def enhance(s: np.ndarray, s_att: np.ndarray, params: CrossAttnParams):
    """Per-token [s; s'; s - s'; s ⊙ s'] through the shared ReLU projection.

    Returns (out, cache); out is elementwise non-negative.
    """
    if s.shape != s_att.shape:
        raise DegenerateInputError(
            f"enhance: shapes {s.shape} and {s_att.shape} differ")
    feats = np.concatenate([s, s_att, s - s_att, s * s_att], axis=1)  # (len, 4k)
    pre = feats @ params.W_enh.value.T + params.b_enh.value
    return relu(pre), (feats, pre)


def enhance_backward(dout: np.ndarray, s: np.ndarray, s_att: np.ndarray,
                     cache, params: CrossAttnParams):
    """Returns (ds, ds_att) and accumulates into W_enh and b_enh."""
    feats, pre = cache
    dpre = relu_backward(dout, pre)
    params.W_enh.grad += dpre.T @ feats
    params.b_enh.grad += dpre.sum(axis=0)
    dfeats = dpre @ params.W_enh.value
    k = s.shape[1]
    d1, d2, d3, d4 = (dfeats[:, i * k:(i + 1) * k] for i in range(4))
    ds = d1 + d3 + d4 * s_att
    ds_att = d2 - d3 + d4 * s
    return ds, ds_att


def normalize_seq(s: np.ndarray, params: CrossAttnParams) -> np.ndarray:
    """Row-wise layer norm with the module's gamma/beta; shape preserved."""
    return layer_norm(s, params.ln_gamma.value, params.ln_beta.value, eps=LN_EPS)


def normalize_seq_backward(dout: np.ndarray, s: np.ndarray,
                           params: CrossAttnParams) -> np.ndarray:
    ds, dgamma, dbeta = layer_norm_backward(dout, s, params.ln_gamma.value, eps=LN_EPS)
    params.ln_gamma.grad += dgamma
    params.ln_beta.grad += dbeta
    return ds


def pool_side(s: np.ndarray):
    """Mean and max over tokens, concatenated to a 2k vector.

    Returns (pooled, argmax_rows) so the backward can route the max part.
    """
    mx, idx = max_over_rows(s)
    return np.concatenate([mean_over_rows(s), mx]), idx


def pool_side_backward(dpooled: np.ndarray, idx: np.ndarray, n_rows: int) -> np.ndarray:
    k = dpooled.shape[0] // 2
    ds = mean_over_rows_backward(dpooled[:k], n_rows)
    ds += max_over_rows_backward(dpooled[k:], idx, n_rows)
    return ds


def combine_pooled(a_p: np.ndarray, a_h: np.ndarray) -> PairRep:
    """z = [a_p; a_h; a_p - a_h; a_p ⊙ a_h] plus its unit-norm copy."""
    z = np.concatenate([a_p, a_h, a_p - a_h, a_p * a_h])
    norm = np.linalg.norm(z)
    if norm > 0.0:
        return PairRep(z=z, z_norm=z / norm)
    return PairRep(z=z, z_norm=z.copy(), zero_norm=True)


def combine_pooled_backward(dz: np.ndarray, a_p: np.ndarray, a_h: np.ndarray):
    two_k = a_p.shape[0]
    b1, b2, b3, b4 = (dz[i * two_k:(i + 1) * two_k] for i in range(4))
    da_p = b1 + b3 + b4 * a_h
    da_h = b2 - b3 + b4 * a_p
    return da_p, da_h


def aggregate(sp_hat: np.ndarray, sh_hat: np.ndarray) -> PairRep:
    """Pool each side to [mean; max] (2k) and combine into the 8k pair vector."""
    if sp_hat.shape[0] == 0 or sh_hat.shape[0] == 0:
        raise DegenerateInputError("aggregate: empty sequence")
    a_p, _ = pool_side(sp_hat)
    a_h, _ = pool_side(sh_hat)
    return combine_pooled(a_p, a_h)


def norm_grad_to_raw(dz_norm: np.ndarray, rep: PairRep) -> np.ndarray:
    """Pull a gradient w.r.t. z_norm back to raw z through z_norm = z / ||z||.

    For flagged zero-norm reps the map is the identity (z_norm := z there).
    """
    if rep.zero_norm:
        return dz_norm.copy()
    norm = np.linalg.norm(rep.z)
    return (dz_norm - rep.z_norm * (rep.z_norm @ dz_norm)) / norm


# ---------------------------------------------------------------------------
# full pair forward / backward
# ---------------------------------------------------------------------------

@dataclass
class PairCache:
    """Intermediates from one forward pass, consumed by ``backward_pair``."""

    seq_p: TokenSeq
    seq_h: TokenSeq
    sp: np.ndarray
    sh: np.ndarray
    co_cache: tuple = None
    align_cache: tuple = None
    sp_att: np.ndarray = None
    sh_att: np.ndarray = None
    enh_cache_p: tuple = None
    enh_cache_h: tuple = None
    enh_p: np.ndarray = None
    enh_h: np.ndarray = None
    scores: np.ndarray = None
    idx_p: np.ndarray = None
    idx_h: np.ndarray = None
    a_p: np.ndarray = None
    a_h: np.ndarray = None
    rep: PairRep = None
    extras: dict = field(default_factory=dict)


def forward_pair(seq_p: TokenSeq, seq_h: TokenSeq, enc: EncoderParams,
                 attn: CrossAttnParams):
    """Encode both sentences and run the full cross-attention pipeline.

    Returns (PairRep, PairCache).
    """
    sp = encode(seq_p, enc)
    sh = encode(seq_h, enc)
    cache = PairCache(seq_p=seq_p, seq_h=seq_h, sp=sp, sh=sh)

    cache.scores, cache.co_cache = coattention(sp, sh, attn)
    cache.sp_att, cache.sh_att, cache.align_cache = align(cache.scores, sp, sh)
    cache.enh_p, cache.enh_cache_p = enhance(sp, cache.sp_att, attn)
    cache.enh_h, cache.enh_cache_h = enhance(sh, cache.sh_att, attn)
    norm_p = normalize_seq(cache.enh_p, attn)
    norm_h = normalize_seq(cache.enh_h, attn)
    cache.a_p, cache.idx_p = pool_side(norm_p)
    cache.a_h, cache.idx_h = pool_side(norm_h)
    cache.rep = combine_pooled(cache.a_p, cache.a_h)
    return cache.rep, cache


def backward_pair(cache: PairCache, dz: np.ndarray, dz_norm: np.ndarray,
                  enc: EncoderParams, attn: CrossAttnParams) -> None:
    """Accumulate gradients of a scalar loss through one pair.

    ``dz`` is the gradient w.r.t. the raw pair vector, ``dz_norm`` w.r.t. its
    unit-norm copy; either may be zero.
    """
    dz_total = dz + norm_grad_to_raw(dz_norm, cache.rep)

    da_p, da_h = combine_pooled_backward(dz_total, cache.a_p, cache.a_h)
    dnorm_p = pool_side_backward(da_p, cache.idx_p, cache.enh_p.shape[0])
    dnorm_h = pool_side_backward(da_h, cache.idx_h, cache.enh_h.shape[0])

    denh_p = normalize_seq_backward(dnorm_p, cache.enh_p, attn)
    denh_h = normalize_seq_backward(dnorm_h, cache.enh_h, attn)

    dsp, dsp_att = enhance_backward(denh_p, cache.sp, cache.sp_att,
                                    cache.enh_cache_p, attn)
    dsh, dsh_att = enhance_backward(denh_h, cache.sh, cache.sh_att,
                                    cache.enh_cache_h, attn)

    dscores, dsp_al, dsh_al = align_backward(dsp_att, dsh_att, cache.sp,
                                             cache.sh, cache.align_cache)
    dsp += dsp_al
    dsh += dsh_al

    dsp_co, dsh_co = coattention_backward(dscores, cache.sp, cache.sh,
                                          cache.co_cache, attn)
    dsp += dsp_co
    dsh += dsh_co

    encode_backward(dsp, cache.seq_p, cache.sp, enc)
    encode_backward(dsh, cache.seq_h, cache.sh, enc)


# ---------------------------------------------------------------------------
# ablation wiring: no cross attention, plain pooled concatenation
# ---------------------------------------------------------------------------

def forward_pair_concat(seq_p: TokenSeq, seq_h: TokenSeq, enc: EncoderParams):
    """Pair vector without interaction: z = [pooled(premise); pooled(hypothesis)]
    over raw encoder states, length 4k. Returns (PairRep, PairCache)."""
    sp = encode(seq_p, enc)
    sh = encode(seq_h, enc)
    cache = PairCache(seq_p=seq_p, seq_h=seq_h, sp=sp, sh=sh)
    cache.a_p, cache.idx_p = pool_side(sp)
    cache.a_h, cache.idx_h = pool_side(sh)
    z = np.concatenate([cache.a_p, cache.a_h])
    norm = np.linalg.norm(z)
    if norm > 0.0:
        cache.rep = PairRep(z=z, z_norm=z / norm)
    else:
        cache.rep = PairRep(z=z, z_norm=z.copy(), zero_norm=True)
    return cache.rep, cache


def backward_pair_concat(cache: PairCache, dz: np.ndarray, dz_norm: np.ndarray,
                         enc: EncoderParams) -> None:
    dz_total = dz + norm_grad_to_raw(dz_norm, cache.rep)
    two_k = cache.a_p.shape[0]
    dsp = pool_side_backward(dz_total[:two_k], cache.idx_p, cache.sp.shape[0])
    dsh = pool_side_backward(dz_total[two_k:], cache.idx_h, cache.sh.shape[0])
    encode_backward(dsp, cache.seq_p, cache.sp, enc)
    encode_backward(dsh, cache.seq_h, cache.sh, enc)
