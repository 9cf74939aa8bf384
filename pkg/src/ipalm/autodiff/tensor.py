"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a contiguous numpy array. When gradient tracking is
enabled and at least one input requires a gradient, every operation records
its inputs and a closure mapping the output gradient to input gradients.
:func:`backward` walks that graph once in reverse topological order and
accumulates into the ``grad`` field of every reachable :class:`Parameter`.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..errors import ContractError

DEFAULT_DTYPE = np.float64

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (per thread)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_backward", "op", "__weakref__")

    # make numpy defer to our reflected operators (ndarray * Tensor -> Tensor.__rmul__)
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind in "iub" and dtype is None:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[BackwardFn] = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def __len__(self):
        return self.shape[0]

    # operators are bound in ops.py to keep this module free of math

    def backward(self):
        backward(self)


class Parameter(Tensor):
    """A trainable leaf tensor with a named gradient buffer."""

    __slots__ = ("name", "grad")

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def make_node(data: np.ndarray, parents: Iterable[Tensor], backward_fn: BackwardFn, op: str) -> Tensor:
    """Wrap ``data`` as the output of an operation.

    ``backward_fn`` receives the output gradient and returns one gradient per
    parent (or None where a parent needs none). No node is recorded when
    tracking is off or no parent requires a gradient.
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.op = op
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if is_grad_enabled():
        parents = tuple(parents)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward_fn
    return out


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root``, inputs before outputs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into every reachable Parameter's ``grad``."""
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if isinstance(node, Parameter):
                node.grad += g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
