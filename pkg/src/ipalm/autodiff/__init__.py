from .tensor import (
    DEFAULT_DTYPE,
    Parameter,
    Tensor,
    backward,
    is_grad_enabled,
    make_node,
    no_grad,
    topological_order,
)
from . import ops
from .ops import (
    KINDS,
    apply,
    as_tensor,
    broadcast,
    broadcast_to,
    concat,
    exp,
    gather,
    log,
    log_softmax,
    masked_fill,
    matmul,
    relu,
    reshape,
    softmax,
    sqdist,
    square,
    swapaxes,
    take_slice,
    transpose,
)
from .gradcheck import grad_check

__all__ = [
    "DEFAULT_DTYPE", "Parameter", "Tensor", "backward", "is_grad_enabled", "make_node",
    "no_grad", "topological_order", "ops", "KINDS", "apply", "as_tensor", "broadcast",
    "broadcast_to", "concat", "exp", "gather", "log", "log_softmax", "masked_fill",
    "matmul", "relu", "reshape", "softmax", "sqdist", "square", "swapaxes", "take_slice",
    "transpose", "grad_check",
]
