"""Differentiable operations on :class:`Tensor`.

Every function here computes its forward value with numpy and registers the
exact reverse-mode rule. Elementwise binary operations follow numpy
broadcasting; their gradients are summed back to each operand's shape.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import kernels
from ..errors import ShapeError
from .tensor import Tensor, make_node


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data + b.data, (a, b),
                     lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data - b.data, (a, b),
                     lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data

    def back(g):
        return unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)

    return make_node(ad * bd, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        return unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)

    return make_node(out, (a, b), back, "div")


def neg(a: Tensor) -> Tensor:
    return make_node(-a.data, (a,), lambda g: (-g,), "neg")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)  # a numpy float64 scalar would promote float32 data
    return make_node(a.data * c, (a,), lambda g: (g * c,), "scale")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_node(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    return make_node(np.log(ad), (a,), lambda g: (g / ad,), "log")


def square(a: Tensor) -> Tensor:
    ad = a.data
    return make_node(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def power(a: Tensor, c: float) -> Tensor:
    ad = a.data
    return make_node(ad ** c, (a,), lambda g: (g * c * ad ** (c - 1),), "power")


def relu(a: Tensor) -> Tensor:
    ad = a.data
    return make_node(np.maximum(ad, 0), (a,), lambda g: (g * (ad > 0),), "relu")


def masked_fill(a: Tensor, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is true by ``value``; no gradient flows there."""
    mask = np.asarray(mask, dtype=bool)
    try:
        np.broadcast_shapes(mask.shape, a.shape)
    except ValueError:
        raise ShapeError(f"masked_fill: mask {mask.shape} vs input {a.shape}") from None
    out = np.where(mask, np.asarray(value, dtype=a.dtype), a.data)
    keep = ~mask
    return make_node(out, (a,), lambda g: (unbroadcast(g * keep, a.shape),), "masked_fill")


# ----------------------------------------------------------------- reductions

def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_node(np.asarray(out), (a,), back, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis, keepdims), 1.0 / float(count))


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.shape} to {shape}") from None
    src = a.shape
    return make_node(np.ascontiguousarray(out), (a,), lambda g: (unbroadcast(g, src),), "broadcast")


def broadcast(a: Tensor, axis: int, size: int) -> Tensor:
    """Insert a new axis at ``axis`` and repeat ``a`` ``size`` times along it."""
    expanded = reshape(a, a.shape[:axis] + (1,) + a.shape[axis:] if axis >= 0
                       else _insert_neg(a.shape, axis))
    target = list(expanded.shape)
    target[axis] = size
    return broadcast_to(expanded, target)


def _insert_neg(shape, axis):
    pos = len(shape) + axis + 1
    return shape[:pos] + (1,) + shape[pos:]


# ------------------------------------------------------------- normalizations

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Normalized exponential along ``axis``; the axis max is subtracted first."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (a,), back, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def back(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make_node(out, (a,), back, "log_softmax")


# ------------------------------------------------------------------- products

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None
    ad, bd = a.data, b.data

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return make_node(ad @ bd, (a, b), back, "matmul")


def sqdist(x: Tensor, centers: Tensor) -> Tensor:
    """Squared Euclidean distance from each vector in ``x`` (..., n) to each row of ``centers`` (P, n).

    Returns shape (..., P).
    """
    if centers.ndim != 2 or x.shape[-1] != centers.shape[-1]:
        raise ShapeError(f"sqdist: vectors {x.shape} vs centers {centers.shape}")
    xd, cd = x.data, centers.data
    diff = xd[..., None, :] - cd
    out = np.einsum("...pn,...pn->...p", diff, diff)

    def back(g):
        gx = 2.0 * np.einsum("...p,...pn->...n", g, diff)
        p, n = diff.shape[-2:]
        gc = -2.0 * np.einsum("ip,ipn->pn", g.reshape(-1, p), diff.reshape(-1, p, n))
        return gx, gc

    return make_node(out, (x, centers), back, "sqdist")


# ---------------------------------------------------------------- structural

def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {src} to {tuple(shape)}") from None
    return make_node(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return make_node(out, (a,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, axes)


def getitem(a: Tensor, index) -> Tensor:
    """Basic (slice / integer) indexing. Advanced indexing is not supported."""
    if isinstance(index, (list, np.ndarray)) or (
        isinstance(index, tuple) and any(isinstance(i, (list, np.ndarray)) for i in index)
    ):
        raise TypeError("getitem supports basic slicing only; use gather for id lookups")
    src_shape, dtype = a.shape, a.dtype
    try:
        out = np.ascontiguousarray(a.data[index])
    except IndexError as exc:
        raise ShapeError(f"slice: {exc} for shape {src_shape}") from None

    def back(g):
        full = np.zeros(src_shape, dtype=dtype)
        full[index] = g
        return (full,)

    return make_node(out, (a,), back, "slice")


def take_slice(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= a.shape[axis]):
        raise ShapeError(f"slice: range [{start}, {stop}) outside axis {axis} of {a.shape}")
    index = [slice(None)] * a.ndim
    index[axis] = slice(start, stop)
    return getitem(a, tuple(index))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_node(out, tensors, back, "concat")


def gather(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` (V, n) selected by integer ``ids`` of any shape."""
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise TypeError(f"gather: ids must be integers, got {ids.dtype}")
    if table.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got {table.shape}")
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = ids[(ids < 0) | (ids >= vocab)].reshape(-1)[0]
        raise IndexError(f"gather: id {int(bad)} outside [0, {vocab})")
    flat = ids.reshape(-1).astype(np.int64)
    out = table.data[flat].reshape(ids.shape + (table.shape[1],))
    shape, dtype = table.shape, table.dtype

    def back(g):
        gt = np.zeros(shape, dtype=dtype)
        kernels.scatter_add_rows(gt, flat, np.ascontiguousarray(g.reshape(-1, shape[1]), dtype=dtype))
        return (gt,)

    return make_node(out, (table,), back, "gather")


# --------------------------------------------------------------------- dispatch

KINDS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "scale": scale,
    "exp": exp,
    "log": log,
    "square": square,
    "power": power,
    "relu": relu,
    "sum": sum,
    "mean": mean,
    "broadcast": broadcast,
    "broadcast_to": broadcast_to,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "sqdist": sqdist,
    "reshape": reshape,
    "transpose": transpose,
    "slice": take_slice,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "gather": gather,
    "masked_fill": masked_fill,
}


def apply(kind: str, *inputs, **params) -> Tensor:
    """Run operation ``kind`` by name, e.g. ``apply("softmax", x, axis=0)``."""
    try:
        fn = KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown operation kind {kind!r}") from None
    return fn(*inputs, **params)


# ------------------------------------------------------------ operator sugar

def _bind():
    T = Tensor
    T.__add__ = lambda s, o: add(s, as_tensor(o, s))
    T.__radd__ = lambda s, o: add(as_tensor(o, s), s)
    T.__sub__ = lambda s, o: sub(s, as_tensor(o, s))
    T.__rsub__ = lambda s, o: sub(as_tensor(o, s), s)
    T.__mul__ = lambda s, o: scale(s, o) if np.isscalar(o) else mul(s, as_tensor(o, s))
    T.__rmul__ = lambda s, o: scale(s, o) if np.isscalar(o) else mul(as_tensor(o, s), s)
    T.__truediv__ = lambda s, o: scale(s, 1.0 / o) if np.isscalar(o) else div(s, as_tensor(o, s))
    T.__rtruediv__ = lambda s, o: div(as_tensor(o, s), s)
    T.__neg__ = neg
    T.__matmul__ = lambda s, o: matmul(s, as_tensor(o, s))
    T.__rmatmul__ = lambda s, o: matmul(as_tensor(o, s), s)
    T.__pow__ = lambda s, c: square(s) if c == 2 else power(s, c)
    T.__getitem__ = getitem
    T.exp = exp
    T.log = log
    T.relu = relu
    T.sum = sum
    T.mean = mean
    T.softmax = softmax
    T.reshape = lambda s, *shape: reshape(s, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
    T.transpose = transpose
    T.swapaxes = swapaxes
    T.T = property(lambda s: transpose(s))


_bind()
