"""Causal column and row operations of the IPA estimator.

The public functions take the embedding matrix in column layout, ``X`` of
shape ``(n, m)`` (optionally with leading batch axes), so that ``X[:, j]``
is the vector of token j. The model itself runs on the token-major layout
``(..., m, n)`` through the ``*_tokens`` variants to avoid transposes.

Column operation, per output position j::

    y_j = a + sum_{l <= j} sum_p K[p, j, l] * S^p x_l
    K[p, j, l] = softmax_p(x_l^T W^p x_j)

Row operation, per position j (diagonal row coefficients)::

    y_j = B[:, j] + sum_p kappa_p(x_j) * A^p x_j
    kappa_p(x) = softmax_p(-|x - xi^p|^2 / (2 sigma_p^2))

``S^p = S_left^p S_right^p`` and ``W^p = W_left^p W_right^p`` are rank-k
factorizations; one pair of factors per expert is shared by all positions.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import Parameter, Tensor, as_tensor, ops
from ..errors import ContractError, ShapeError
from ..nn import add_axis, causal_mask, uniform


class ColumnParams:
    """Expert factors for the column operation, stacked over experts.

    s_left (P, n, k), s_right (P, k, n), w_left (P, n, k), w_right (P, k, n),
    bias (n,).
    """

    def __init__(self, n: int, k: int, p: int, m_max: int, rng=None, dtype=np.float64,
                 prefix: str = "col", prefix_mean: bool = False):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n, self.k, self.p, self.m_max = n, k, p, m_max
        self.prefix_mean = prefix_mean
        self.s_left = Parameter(uniform(rng, (p, n, k), k, dtype), f"{prefix}.s_left")
        self.s_right = Parameter(uniform(rng, (p, k, n), n, dtype), f"{prefix}.s_right")
        self.w_left = Parameter(uniform(rng, (p, n, k), k, dtype), f"{prefix}.w_left")
        self.w_right = Parameter(uniform(rng, (p, k, n), n, dtype), f"{prefix}.w_right")
        self.bias = Parameter(np.zeros(n, dtype=dtype), f"{prefix}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.s_left, self.s_right, self.w_left, self.w_right, self.bias]

    def dense_s(self) -> np.ndarray:
        return self.s_left.data @ self.s_right.data

    def dense_w(self) -> np.ndarray:
        return self.w_left.data @ self.w_right.data


class RowParams:
    """Expert maps for the row operation.

    a (P, n, n), centers (P, n), log_sigma (P,), bias (n, m_max).
    """

    def __init__(self, n: int, p: int, m_max: int, rng=None, dtype=np.float64, prefix: str = "row"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n, self.p, self.m_max = n, p, m_max
        self.a = Parameter(uniform(rng, (p, n, n), n, dtype), f"{prefix}.a")
        self.centers = Parameter(rng.standard_normal((p, n)).astype(dtype), f"{prefix}.centers")
        self.log_sigma = Parameter(np.full(p, 0.5 * np.log(n), dtype=dtype), f"{prefix}.log_sigma")
        self.bias = Parameter(np.zeros((n, m_max), dtype=dtype), f"{prefix}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.a, self.centers, self.log_sigma, self.bias]

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma.data)


def _check_tokens(h: Tensor, n: int, m_max: int, where: str) -> int:
    if h.ndim < 2 or h.shape[-1] != n:
        raise ShapeError(f"{where}: expected (..., m, {n}) token matrix, got {h.shape}")
    m = h.shape[-2]
    if m > m_max:
        raise ContractError(f"{where}: sequence length {m} exceeds m_max={m_max}")
    return m


# ------------------------------------------------------------ token-major core

def column_logits_tokens(h: Tensor, params: ColumnParams) -> Tensor:
    """Unnormalized kernel exponents (..., P, m, m): [p, j, l] = x_l^T W^p x_j."""
    _check_tokens(h, params.n, params.m_max, "column_kernel")
    h1 = add_axis(h, -3)
    u = h1 @ params.w_left                          # (..., P, m, k): W_left^T x_l
    z = h1 @ ops.swapaxes(params.w_right, -1, -2)   # (..., P, m, k): W_right x_j
    return z @ ops.swapaxes(u, -1, -2)


def normalize_column_logits(logits: Tensor) -> Tensor:
    """Normalize over experts, then zero every future position l > j."""
    m = logits.shape[-1]
    return ops.masked_fill(ops.softmax(logits, axis=-3), causal_mask(m), 0.0)


def column_kernel_tokens(h: Tensor, params: ColumnParams) -> Tensor:
    """Kernel weights (..., P, m, m) indexed [p, j, l]; zero for l > j."""
    return normalize_column_logits(column_logits_tokens(h, params))


def column_forward_tokens(h: Tensor, params: ColumnParams, trace: dict | None = None) -> Tensor:
    kern = column_kernel_tokens(h, params)
    h1 = add_axis(h, -3)
    values = (h1 @ ops.swapaxes(params.s_right, -1, -2)) @ ops.swapaxes(params.s_left, -1, -2)
    mixed = ops.sum(kern @ values, axis=-3)
    if params.prefix_mean:
        m = h.shape[-2]
        mixed = mixed * (1.0 / np.arange(1, m + 1, dtype=h.dtype))[:, None]
    if trace is not None:
        trace.setdefault("column_kernel", []).append(kern.data)
    return mixed + params.bias


def row_kernel_tokens(h: Tensor, params: RowParams) -> Tensor:
    """Expert weights (..., m, P) of the Gaussian radial kernel, per token."""
    if h.shape[-1] != params.n:
        raise ShapeError(f"row_kernel: expected vectors of size {params.n}, got {h.shape}")
    dist = ops.sqdist(h, params.centers)
    inv_two_var = ops.exp(params.log_sigma * -2.0) * 0.5
    return ops.softmax(-(dist * inv_two_var), axis=-1)


def row_forward_tokens(h: Tensor, params: RowParams, trace: dict | None = None) -> Tensor:
    m = _check_tokens(h, params.n, params.m_max, "row_forward")
    kappa = row_kernel_tokens(h, params)
    mapped = add_axis(h, -3) @ ops.swapaxes(params.a, -1, -2)     # (..., P, m, n)
    gate = add_axis(ops.swapaxes(kappa, -1, -2), -1)              # (..., P, m, 1)
    mixed = ops.sum(mapped * gate, axis=-3)
    bias = ops.transpose(ops.take_slice(params.bias, 1, 0, m))    # (m, n)
    if trace is not None:
        trace.setdefault("row_kernel", []).append(kappa.data)
    return mixed + bias


# ------------------------------------------------------- column-layout wrappers

def _to_tokens(x) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError(f"expected an (n, m) matrix, got shape {x.shape}")
    return ops.swapaxes(x, -1, -2)


def column_kernel(x, params: ColumnParams) -> Tensor:
    """Kernel weights ``K[p, j, l]`` for an ``(n, m)`` input; shape ``(P, m, m)``."""
    return column_kernel_tokens(_to_tokens(x), params)


def column_forward(x, params: ColumnParams) -> Tensor:
    """Causal column operation on ``X`` of shape ``(n, m)``; returns ``(n, m)``."""
    return ops.swapaxes(column_forward_tokens(_to_tokens(x), params), -1, -2)


def row_kernel(x_col, params: RowParams) -> Tensor:
    """Normalized radial weights (P,) for one column vector (or (..., n) stack)."""
    return row_kernel_tokens(as_tensor(x_col), params)


def row_forward(x, params: RowParams) -> Tensor:
    """Causal row operation on ``X`` of shape ``(n, m)``; returns ``(n, m)``."""
    return ops.swapaxes(row_forward_tokens(_to_tokens(x), params), -1, -2)
