"""Plain causal decoder used as the comparison baseline."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..autodiff import Parameter, Tensor, gather, ops
from ..errors import ContractError
from ..ipa.config import _check_positive, config_from_dict, dtype_for
from ..ipa.model import check_ids
from ..nn import LayerNorm, add_axis, causal_mask, uniform


@dataclass(frozen=True)
class GPTConfig:
    n: int = 120
    n_heads: int = 8
    d_ff: int = 480
    n_layers: int = 4
    m_max: int = 100
    vocab_size: int = 8192
    tie_head: bool = True
    layernorm: bool = False
    precision: int = 64

    def __post_init__(self):
        _check_positive(self, "n", "n_heads", "d_ff", "m_max", "vocab_size")
        if not isinstance(self.n_layers, (int, np.integer)) or self.n_layers < 0:
            raise ContractError(f"GPTConfig.n_layers must be >= 0, got {self.n_layers!r}")
        if self.n % self.n_heads:
            raise ContractError(f"GPTConfig.n_heads must divide n, got n={self.n}, n_heads={self.n_heads}")
        dtype_for(self.precision)

    @property
    def dtype(self):
        return dtype_for(self.precision)

    @property
    def head_dim(self) -> int:
        return self.n // self.n_heads

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GPTConfig":
        return config_from_dict(cls, data)


class DecoderBlock:
    def __init__(self, cfg: GPTConfig, rng, index: int):
        n, f, dt = cfg.n, cfg.d_ff, cfg.dtype
        name = f"layers.{index}"
        self.n_heads = cfg.n_heads
        self.wq = Parameter(uniform(rng, (n, n), n, dt), f"{name}.attn.wq")
        self.wk = Parameter(uniform(rng, (n, n), n, dt), f"{name}.attn.wk")
        self.wv = Parameter(uniform(rng, (n, n), n, dt), f"{name}.attn.wv")
        self.wo = Parameter(uniform(rng, (n, n), n, dt), f"{name}.attn.wo")
        self.bq = Parameter(np.zeros(n, dtype=dt), f"{name}.attn.bq")
        self.bk = Parameter(np.zeros(n, dtype=dt), f"{name}.attn.bk")
        self.bv = Parameter(np.zeros(n, dtype=dt), f"{name}.attn.bv")
        self.bo = Parameter(np.zeros(n, dtype=dt), f"{name}.attn.bo")
        self.w1 = Parameter(uniform(rng, (n, f), n, dt), f"{name}.ff.w1")
        self.b1 = Parameter(np.zeros(f, dtype=dt), f"{name}.ff.b1")
        self.w2 = Parameter(uniform(rng, (f, n), f, dt), f"{name}.ff.w2")
        self.b2 = Parameter(np.zeros(n, dtype=dt), f"{name}.ff.b2")
        self.norms = None
        if cfg.layernorm:
            self.norms = (LayerNorm(n, f"{name}.norm_attn", dt), LayerNorm(n, f"{name}.norm_ff", dt))

    def parameters(self) -> list[Parameter]:
        out = [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo,
               self.w1, self.b1, self.w2, self.b2]
        if self.norms:
            out += self.norms[0].parameters() + self.norms[1].parameters()
        return out

    def _split(self, x: Tensor) -> Tensor:
        lead, (m, n) = x.shape[:-2], x.shape[-2:]
        heads = ops.reshape(x, lead + (m, self.n_heads, n // self.n_heads))
        return ops.swapaxes(heads, -2, -3)                   # (..., H, m, d)

    def attention(self, h: Tensor, trace=None) -> Tensor:
        lead, (m, n) = h.shape[:-2], h.shape[-2:]
        q = self._split(h @ self.wq + self.bq)
        k = self._split(h @ self.wk + self.bk)
        v = self._split(h @ self.wv + self.bv)
        scores = (q @ ops.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(n // self.n_heads))
        weights = ops.softmax(ops.masked_fill(scores, causal_mask(m), -np.inf), axis=-1)
        if trace is not None:
            trace.setdefault("attention", []).append(weights.data)
        ctx = ops.reshape(ops.swapaxes(weights @ v, -2, -3), lead + (m, n))
        return ctx @ self.wo + self.bo

    def feedforward(self, h: Tensor) -> Tensor:
        return ops.relu(h @ self.w1 + self.b1) @ self.w2 + self.b2

    def __call__(self, h: Tensor, trace=None) -> Tensor:
        a_in = self.norms[0](h) if self.norms else h
        h = h + self.attention(a_in, trace)
        f_in = self.norms[1](h) if self.norms else h
        return h + self.feedforward(f_in)


class GPTModel:
    kind = "gpt"

    def __init__(self, config: GPTConfig, seed: int = 0):
        self.config = config
        dt = config.dtype
        rng = np.random.default_rng(seed)
        n, v = config.n, config.vocab_size
        self.embedding = Parameter(rng.normal(0.0, 1.0 / np.sqrt(n), (v, n)).astype(dt), "embedding")
        self.positional = Parameter(rng.normal(0.0, 1.0 / np.sqrt(n), (config.m_max, n)).astype(dt), "positional")
        self.layers = [DecoderBlock(config, rng, i) for i in range(config.n_layers)]
        self.head_weight = None
        if not config.tie_head:
            self.head_weight = Parameter(rng.normal(0.0, 1.0 / np.sqrt(n), (v, n)).astype(dt), "head.weight")
        self.head_bias = Parameter(np.zeros(v, dtype=dt), "head.bias")

    def parameters(self) -> list[Parameter]:
        params = [self.embedding, self.positional]
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
        cfg = self.config
        ids = check_ids(ids, cfg.vocab_size, cfg.m_max)
        m = ids.shape[-1]
        h = gather(self.embedding, ids) + ops.take_slice(self.positional, 0, 0, m)
        for layer in self.layers:
            h = layer(h, trace)
        return h @ ops.transpose(self.head_matrix) + self.head_bias


def gpt_forward(token_ids, model: GPTModel) -> Tensor:
    """Logits as a (V, m) matrix for a single sequence."""
    ids = np.asarray(token_ids)
    if ids.ndim != 1:
        raise ContractError(f"gpt_forward takes one sequence, got shape {ids.shape}")
    return ops.transpose(model(ids))


def param_count_gpt(config: GPTConfig, m: int) -> int:
    """Exact parameter count with a positional table of ``m`` rows."""
    if not 1 <= m <= config.m_max:
        raise ContractError(f"m={m} outside [1, m_max={config.m_max}]")
    n, f, v = config.n, config.d_ff, config.vocab_size
    total = v * n + v + m * n
    if not config.tie_head:
        total += v * n
    per_layer = 4 * (n * n + n) + n * f + f + f * n + n
    if config.layernorm:
        per_layer += 4 * n
    return total + config.n_layers * per_layer
