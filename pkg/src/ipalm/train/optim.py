from __future__ import annotations

from typing import Sequence

import numpy as np

from ..autodiff import Parameter
from ..errors import NumericError


def clip_grad_norm(params: Sequence[Parameter], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``. Returns the norm before clipping."""
    total = float(np.sqrt(sum(float(np.vdot(p.grad, p.grad)) for p in params)))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-12)
        for p in params:
            p.grad *= factor
    return total


class Adam:
    """Bias-corrected adaptive-moment updates at a constant learning rate."""

    def __init__(self, params: Sequence[Parameter], lr: float = 2e-5, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self):
        for p in self.params:
            if not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient in parameter {p.name!r}")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for p in self.params:
            m, v, g = self.m[p.name], self.v[p.name], p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def state_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for name in self.m:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        return out

    def load_state(self, tensors: dict[str, np.ndarray], step_count: int):
        for name in self.m:
            self.m[name][...] = tensors[f"opt.m.{name}"]
            self.v[name][...] = tensors[f"opt.v.{name}"]
        self.step_count = step_count


def adam_step(params: Sequence[Parameter], state: Adam) -> Adam:
    """Apply one update with the gradients currently stored on ``params``."""
    if [p.name for p in params] != [p.name for p in state.params]:
        raise ValueError("adam_step: parameter list does not match optimizer state")
    state.step()
    return state
