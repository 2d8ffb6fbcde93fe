"""Dense float64 kernels: forward ops paired with analytic backward rules.

There is no autodiff graph here. Every exported op has a matching
``<op>_backward`` that maps an upstream gradient to input gradients, and
composite modules chain these rules by hand. ``backward_check`` verifies any
forward/backward pair against central finite differences.

All ops are deterministic and operate on float64 arrays. Matrices are 2-D
row-major arrays, vectors are 1-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, KinkPointError, ShapeError

FD_STEP = 1e-5
# Entries smaller than this are compared absolutely rather than relatively,
# so finite-difference roundoff (~1e-10) cannot dominate near-zero gradients.
REL_FLOOR = 1e-3


class Param:
    """Named trainable tensor. Gradients accumulate additively into ``grad``;
    the caller zeroes them explicitly between steps."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value) -> None:
        self.name = name
        self.value = np.array(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


def _require_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# activations and normalization
# ---------------------------------------------------------------------------

def softmax(v: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Softmax along the last axis, with max-subtraction for overflow safety.

    ``mask`` marks valid positions; masked-out entries are exactly 0 in the
    output and the remaining entries sum to 1.
    """
    v = np.asarray(v, dtype=np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        _require_same_shape(v, mask, "softmax")
        if not mask.any(axis=-1).all():
            raise DegenerateInputError("softmax: all positions masked out")
        shifted = np.where(mask, v, -np.inf)
    else:
        shifted = v
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    """dL/dv given dL/dout and the forward output. Masked positions have
    out == 0 and therefore receive zero gradient."""
    inner = (dout * out).sum(axis=-1, keepdims=True)
    return out * (dout - inner)


def layer_norm(v: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = 1e-5) -> np.ndarray:
    """Standardize along the last axis (population variance, eps inside the
    square root), then scale by gamma and shift by beta."""
    if eps <= 0:
        raise ShapeError(f"layer_norm: eps must be > 0, got {eps}")
    v = np.asarray(v, dtype=np.float64)
    _require_same_shape(np.empty(v.shape[-1:]), np.asarray(gamma), "layer_norm gamma")
    _require_same_shape(np.asarray(gamma), np.asarray(beta), "layer_norm gamma/beta")
    mu = v.mean(axis=-1, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
    xhat = (v - mu) / np.sqrt(var + eps)
    return gamma * xhat + beta


def layer_norm_backward(dout: np.ndarray, v: np.ndarray, gamma: np.ndarray,
                        eps: float = 1e-5):
    """Returns (dv, dgamma, dbeta). Moments are recomputed from ``v``.

    With xhat the standardized input and inv = 1/sqrt(var + eps):
        dv = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
    where the means run over the normalized axis.
    """
    v = np.asarray(v, dtype=np.float64)
    mu = v.mean(axis=-1, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (v - mu) * inv

    lead = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=lead)
    dbeta = dout.sum(axis=lead)
    dxhat = dout * gamma
    dv = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dv, dgamma, dbeta


def tanh(a: np.ndarray) -> np.ndarray:
    return np.tanh(np.asarray(a, dtype=np.float64))


def tanh_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    return dout * (1.0 - out * out)


def relu(a: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(a, dtype=np.float64), 0.0)


def relu_backward(dout: np.ndarray, a: np.ndarray) -> np.ndarray:
    return dout * (np.asarray(a) > 0.0)


# ---------------------------------------------------------------------------
# linear algebra and elementwise ops
# ---------------------------------------------------------------------------

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    return a @ b


def matmul_backward(dout: np.ndarray, a: np.ndarray, b: np.ndarray):
    return dout @ b.T, a.T @ dout


def elem_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_same_shape(a, b, "elem_mul")
    return a * b


def elem_mul_backward(dout: np.ndarray, a: np.ndarray, b: np.ndarray):
    return dout * b, dout * a


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_same_shape(a, b, "add")
    return a + b


def add_backward(dout: np.ndarray):
    return dout, dout


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_same_shape(a, b, "sub")
    return a - b


def sub_backward(dout: np.ndarray):
    return dout, -dout


def concat_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"concat_rows: shapes {a.shape} and {b.shape} differ in columns")
    return np.concatenate([a, b], axis=0)


def split_rows(m: np.ndarray, rows: int):
    return m[:rows].copy(), m[rows:].copy()


def concat_cols(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: shapes {a.shape} and {b.shape} differ in rows")
    return np.concatenate([a, b], axis=1)


def split_cols(m: np.ndarray, cols: int):
    return m[:, :cols].copy(), m[:, cols:].copy()


def concat_rows_backward(dout: np.ndarray, rows_a: int):
    return split_rows(dout, rows_a)


def concat_cols_backward(dout: np.ndarray, cols_a: int):
    return split_cols(dout, cols_a)


# ---------------------------------------------------------------------------
# reductions over rows
# ---------------------------------------------------------------------------

def mean_over_rows(a: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if a.shape[0] == 0:
        raise DegenerateInputError("mean_over_rows: empty input")
    return a.mean(axis=0)


def mean_over_rows_backward(dout: np.ndarray, n_rows: int) -> np.ndarray:
    return np.tile(dout / n_rows, (n_rows, 1))


def max_over_rows(a: np.ndarray):
    """Column-wise max and the row index attaining it (ties break toward the
    lowest row index, which is where the gradient routes)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if a.shape[0] == 0:
        raise DegenerateInputError("max_over_rows: empty input")
    idx = a.argmax(axis=0)
    return a[idx, np.arange(a.shape[1])], idx


def max_over_rows_backward(dout: np.ndarray, idx: np.ndarray, n_rows: int) -> np.ndarray:
    da = np.zeros((n_rows, dout.shape[0]))
    da[idx, np.arange(dout.shape[0])] = dout
    return da


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    name: str
    max_rel_err: float
    tol: float
    passed: bool
    n_entries: int

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: max rel err {self.max_rel_err:.3e} "
                f"(tol {self.tol:.1e}, {self.n_entries} entries)")


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = REL_FLOOR) -> float:
    """Max elementwise relative error; below ``floor`` the comparison is
    effectively absolute so exact zeros and tiny entries do not blow up."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def backward_check(forward, vjp, inputs, name: str = "op", tol: float = 1e-6,
                   step: float = FD_STEP, seed: int = 0) -> GradCheckReport:
    """Compare an analytic vector-Jacobian product against central finite
    differences at the given point.

    ``forward(*inputs)`` returns an array; ``vjp(dout, *inputs)`` returns one
    gradient array per input. A random cotangent probes the full Jacobian:
    the finite difference of sum(cotangent * forward) with step h = 1e-5 must
    match the analytic gradient entrywise within ``tol`` relative error.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    out = forward(*inputs)
    rng = np.random.default_rng(seed)
    cotangent = rng.standard_normal(np.shape(out))

    analytic = vjp(cotangent, *inputs)
    if len(analytic) != len(inputs):
        raise ShapeError(
            f"backward_check: vjp returned {len(analytic)} grads for {len(inputs)} inputs")

    def probe(xs):
        return float(np.sum(cotangent * forward(*xs)))

    max_err = 0.0
    n_entries = 0
    for which, grad in enumerate(analytic):
        x = inputs[which]
        fd = np.zeros_like(x)
        flat = x.reshape(-1)
        fd_flat = fd.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = probe(inputs)
            flat[j] = orig - step
            down = probe(inputs)
            flat[j] = orig
            fd_flat[j] = (up - down) / (2.0 * step)
        max_err = max(max_err, rel_error(grad, fd))
        n_entries += flat.size

    return GradCheckReport(name=name, max_rel_err=max_err, tol=tol,
                           passed=max_err < tol, n_entries=n_entries)


def require_away_from_kink(values: np.ndarray, what: str,
                           margin: float = 10 * FD_STEP) -> None:
    """Refuse finite-difference checks at ReLU kinks or near max ties."""
    if np.any(np.abs(values) < margin):
        raise KinkPointError(
            f"{what} within {margin:g} of a non-differentiable point; resample the point")
