"""One-dimensional piecewise affine estimate from local Taylor lines."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ContractError


def kernel_weights_1d(x, points: Sequence[float], bandwidths: Sequence[float]) -> np.ndarray:
    """Normalized Gaussian weights, shape ``x.shape + (P,)``."""
    x = np.asarray(x, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    bw = np.asarray(bandwidths, dtype=np.float64)
    logits = -((x[..., None] - pts) ** 2) / (2.0 * bw ** 2)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def piecewise_affine_1d(x, centers: Sequence[tuple[float, float, float]], bandwidths: Sequence[float]):
    """Kernel-weighted mixture of first-order Taylor lines.

    ``centers`` holds ``(x_p, F(x_p), F'(x_p))`` triples; ``x`` may be a
    scalar or an array.
    """
    if len(centers) == 0:
        raise ContractError("piecewise_affine_1d needs at least one center")
    if len(bandwidths) != len(centers):
        raise ContractError(f"{len(centers)} centers but {len(bandwidths)} bandwidths")
    if any(b <= 0 for b in bandwidths):
        raise ContractError("bandwidths must be positive")
    pts, vals, slopes = (np.asarray(c, dtype=np.float64) for c in zip(*centers))
    x = np.asarray(x, dtype=np.float64)
    lines = vals + slopes * (x[..., None] - pts)
    out = (kernel_weights_1d(x, pts, bandwidths) * lines).sum(axis=-1)
    return float(out) if out.ndim == 0 else out
