"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .tensor import Param


class Adam:
    """Standard Adam update over a fixed list of named parameters.

    First/second moment accumulators are keyed by parameter name so the full
    optimizer state round-trips through checkpoints. Two runs with identical
    seeds and data produce bit-identical trajectories.
    """

    def __init__(self, params: list[Param], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        if lr <= 0:
            raise ParameterError(f"adam: lr must be > 0, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ParameterError(f"adam: betas must lie in [0, 1), got {beta1}, {beta2}")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ParameterError("adam: parameter names must be unique")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in params}
        self.v = {p.name: np.zeros_like(p.value) for p in params}

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            g = p.grad
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grads(self) -> None:
        for p in self.params:
            p.zero_grad()

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment accumulators as a flat name → array mapping (for checkpoints)."""
        out = {}
        for p in self.params:
            out[f"adam.m/{p.name}"] = self.m[p.name]
            out[f"adam.v/{p.name}"] = self.v[p.name]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        for p in self.params:
            self.m[p.name][...] = arrays[f"adam.m/{p.name}"]
            self.v[p.name][...] = arrays[f"adam.v/{p.name}"]
        self.t = int(t)
