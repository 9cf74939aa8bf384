from __future__ import annotations

import numpy as np

from ..autodiff import Parameter, Tensor, gather, ops
from ..errors import ContractError
from ..nn import LayerNorm
from .config import ModelConfig
from .layers import ColumnParams, RowParams, column_forward_tokens, row_forward_tokens


def check_ids(ids, vocab_size: int, m_max: int) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size == 0:
        raise ContractError(f"empty token sequence (shape {ids.shape})")
    if ids.dtype.kind not in "iu":
        raise TypeError(f"token ids must be integers, got {ids.dtype}")
    if ids.ndim not in (1, 2):
        raise ContractError(f"token ids must be (m,) or (B, m), got shape {ids.shape}")
    m = ids.shape[-1]
    if not 1 <= m <= m_max:
        raise ContractError(f"sequence length {m} outside [1, {m_max}]")
    if ids.min() < 0 or ids.max() >= vocab_size:
        bad = ids[(ids < 0) | (ids >= vocab_size)].reshape(-1)[0]
        raise IndexError(f"token id {int(bad)} outside [0, {vocab_size})")
    return ids


class IPALayer:
    def __init__(self, cfg: ModelConfig, rng, index: int):
        dtype = cfg.dtype
        self.column = ColumnParams(cfg.n, cfg.k, cfg.p_col, cfg.m_max, rng, dtype,
                                   prefix=f"layers.{index}.col", prefix_mean=cfg.prefix_mean)
        self.row = RowParams(cfg.n, cfg.p_row, cfg.m_max, rng, dtype, prefix=f"layers.{index}.row")
        self.residual = cfg.residual
        self.norms = None
        if cfg.layernorm:
            self.norms = (LayerNorm(cfg.n, f"layers.{index}.norm_col", dtype),
                          LayerNorm(cfg.n, f"layers.{index}.norm_row", dtype))

    def parameters(self) -> list[Parameter]:
        out = self.column.parameters() + self.row.parameters()
        if self.norms:
            out += self.norms[0].parameters() + self.norms[1].parameters()
        return out

    def __call__(self, h: Tensor, trace=None) -> Tensor:
        for i, (op, params) in enumerate(((column_forward_tokens, self.column),
                                          (row_forward_tokens, self.row))):
            inp = self.norms[i](h) if self.norms else h
            out = op(inp, params, trace)
            h = h + out if self.residual else out
        return h


class IPAModel:
    """Embedding, ``n_layers`` (column, row) layers and an affine head.

    With ``tie_head`` the head weight is the embedding table itself, so the
    logits of position j are ``E x_j + head_bias``.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        dtype = config.dtype
        rng = np.random.default_rng(seed)
        n, v = config.n, config.vocab_size
        self.embedding = Parameter(rng.normal(0.0, 1.0 / np.sqrt(n), (v, n)).astype(dtype), "embedding")
        self.layers = [IPALayer(config, rng, i) for i in range(config.n_layers)]
        self.head_weight = None
        if not config.tie_head:
            self.head_weight = Parameter(rng.normal(0.0, 1.0 / np.sqrt(n), (v, n)).astype(dtype), "head.weight")
        self.head_bias = Parameter(np.zeros(v, dtype=dtype), "head.bias")

    kind = "ipa"

    def parameters(self) -> list[Parameter]:
        params = [self.embedding]
        for layer in self.layers:
            params += layer.parameters()
        if self.head_weight is not None:
            params.append(self.head_weight)
        params.append(self.head_bias)
        return params

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    @property
    def head_matrix(self) -> Parameter:
        return self.embedding if self.head_weight is None else self.head_weight

    def __call__(self, ids, trace: dict | None = None) -> Tensor:
        """Logits of shape (..., m, V) for ids of shape (m,) or (B, m)."""
        cfg = self.config
        ids = check_ids(ids, cfg.vocab_size, cfg.m_max)
        h = gather(self.embedding, ids)
        for layer in self.layers:
            h = layer(h, trace)
        return h @ ops.transpose(self.head_matrix) + self.head_bias


def ipa_forward(token_ids, model: IPAModel) -> Tensor:
    """Logits as a (V, m) matrix for a single sequence."""
    ids = np.asarray(token_ids)
    if ids.ndim != 1:
        raise ContractError(f"ipa_forward takes one sequence, got shape {ids.shape}")
    return ops.transpose(model(ids))
