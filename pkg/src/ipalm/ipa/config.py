from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


def dtype_for(precision: int):
    if precision == 64:
        return np.float64
    if precision == 32:
        return np.float32
    raise ContractError(f"precision must be 32 or 64, got {precision}")


def _check_positive(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
            raise ContractError(f"{type(obj).__name__}.{name} must be a positive integer, got {value!r}")


def config_from_dict(cls, data: dict):
    """Build a config dataclass from a dict, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ContractError(f"{cls.__name__}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ContractError(f"{cls.__name__}: {exc}") from None


@dataclass(frozen=True)
class ModelConfig:
    """Shape and option set of an IPA language model.

    ``n_layers = 0`` is accepted so the embedding/head path can be tested on
    its own. ``prefix_mean`` divides the column sum at position j by the
    number of summed positions (off by default).
    """

    n: int = 120
    m_max: int = 100
    n_layers: int = 4
    p_col: int = 8
    p_row: int = 4
    k: int = 15
    vocab_size: int = 8192
    tie_head: bool = True
    residual: bool = False
    layernorm: bool = False
    prefix_mean: bool = False
    precision: int = 64

    def __post_init__(self):
        _check_positive(self, "n", "m_max", "p_col", "p_row", "k", "vocab_size")
        if not isinstance(self.n_layers, (int, np.integer)) or self.n_layers < 0:
            raise ContractError(f"ModelConfig.n_layers must be >= 0, got {self.n_layers!r}")
        if self.k > self.n:
            raise ContractError(f"ModelConfig.k must satisfy 1 <= k <= n, got k={self.k}, n={self.n}")
        dtype_for(self.precision)

    @property
    def dtype(self):
        return dtype_for(self.precision)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return config_from_dict(cls, data)
