"""Central finite-difference check of analytic gradients."""
from __future__ import annotations

from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Parameter, Tensor, backward, no_grad


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    epsilon: float = 1e-5,
    point: Optional[Mapping[str, np.ndarray]] = None,
) -> float:
    """Max relative error between backprop gradients and central differences.

    ``f`` is re-evaluated with each parameter element nudged by +/- epsilon.
    The error per element is ``|a - d| / max(1, |a|, |d|)``. If ``point`` is
    given, parameter values are first set from it by name (and left there).
    """
    if not params:
        raise ContractError("grad_check needs at least one parameter")
    if point is not None:
        for p in params:
            if p.name in point:
                p.data[...] = point[p.name]

    for p in params:
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("grad_check: objective is not finite at the base point")
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, grad in zip(params, analytic):
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                fp = float(f().data)
                flat[i] = orig - epsilon
                fm = float(f().data)
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * epsilon)
                a = float(grad.reshape(-1)[i])
                if not (np.isfinite(numeric) and np.isfinite(a)):
                    raise NumericError(f"grad_check: non-finite derivative for {p.name or 'parameter'}[{i}]")
                err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
                worst = max(worst, err)
    return worst
