from .config import ModelConfig
from .counting import param_count_ipa
from .layers import (
    ColumnParams,
    RowParams,
    column_forward,
    column_forward_tokens,
    column_kernel,
    column_kernel_tokens,
    column_logits_tokens,
    normalize_column_logits,
    row_forward,
    row_forward_tokens,
    row_kernel,
    row_kernel_tokens,
)
from .model import IPALayer, IPAModel, ipa_forward
from .piecewise import kernel_weights_1d, piecewise_affine_1d

__all__ = [
    "ModelConfig", "param_count_ipa", "ColumnParams", "RowParams", "column_forward",
    "column_forward_tokens", "column_kernel", "column_kernel_tokens", "column_logits_tokens",
    "normalize_column_logits", "row_forward", "row_forward_tokens", "row_kernel",
    "row_kernel_tokens", "IPALayer", "IPAModel", "ipa_forward", "kernel_weights_1d",
    "piecewise_affine_1d",
]
