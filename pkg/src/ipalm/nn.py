"""Small building blocks shared by both model families."""
from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tensor, ops


def uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class LayerNorm:
    def __init__(self, n: int, name: str, dtype):
        self.gain = Parameter(np.ones(n, dtype=dtype), f"{name}.gain")
        self.shift = Parameter(np.zeros(n, dtype=dtype), f"{name}.shift")

    def parameters(self):
        return [self.gain, self.shift]

    def __call__(self, x: Tensor, eps: float = 1e-5) -> Tensor:
        centered = x - ops.mean(x, axis=-1, keepdims=True)
        var = ops.mean(ops.square(centered), axis=-1, keepdims=True)
        return centered * ops.power(var + eps, -0.5) * self.gain + self.shift


def causal_mask(m: int) -> np.ndarray:
    """Boolean (m, m) mask, True where the key position l lies after query j."""
    return np.triu(np.ones((m, m), dtype=bool), k=1)


def add_axis(x: Tensor, axis: int) -> Tensor:
    shape = list(x.shape)
    shape.insert(axis if axis >= 0 else len(shape) + axis + 1, 1)
    return ops.reshape(x, shape)
