from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, make_node
from ..errors import ShapeError


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean next-token negative log-likelihood.

    ``logits`` is token-major, shape (..., m, V); ``targets`` holds integer
    ids of shape (..., m). Uses a max-shifted log-sum-exp.
    """
    targets = np.asarray(targets)
    if targets.dtype.kind not in "iu":
        raise TypeError(f"targets must be integer ids, got {targets.dtype}")
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    vocab = logits.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        bad = targets[(targets < 0) | (targets >= vocab)].reshape(-1)[0]
        raise IndexError(f"cross_entropy: target {int(bad)} outside [0, {vocab})")

    flat = logits.data.reshape(-1, vocab)
    tgt = targets.reshape(-1).astype(np.int64)
    count = flat.shape[0]
    rows = np.arange(count)
    shifted = flat - flat.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    total = expd.sum(axis=1)
    nll = np.log(total) - shifted[rows, tgt]
    loss = np.asarray(nll.mean(), dtype=logits.dtype)

    def back(g):
        grad = expd / total[:, None]
        grad[rows, tgt] -= 1.0
        grad *= g / count
        return (grad.reshape(logits.shape),)

    return make_node(loss, (logits,), back, "cross_entropy")
