"""Minimal autodiff stack: tensors, layers, optimizer, checkpoint format."""

from .checkpoint import load_arrays, save_arrays
from .layers import (
    GRUCell,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    encode,
    orthogonal,
    qkv_project,
    scaled_dot_attention,
)
from .optim import Adam, clip_grad_norm
from .tensor import (
    Parameter,
    Tensor,
    clip,
    concat,
    exp,
    gather,
    grad_enabled,
    log,
    log_softmax,
    matmul,
    maximum,
    minimum,
    no_grad,
    sigmoid,
    softmax,
    sqrt,
    stack,
    swap_last_axes,
    take,
    tanh,
    tmean,
    transpose,
    tsum,
    where,
)

__all__ = [
    "Adam", "GRUCell", "LayerNorm", "Linear", "Module", "MultiHeadAttention",
    "Parameter", "Tensor", "clip", "clip_grad_norm", "concat", "encode", "exp",
    "gather", "grad_enabled", "load_arrays", "log", "log_softmax", "matmul",
    "maximum", "minimum", "no_grad", "orthogonal", "qkv_project",
    "save_arrays", "scaled_dot_attention", "sigmoid", "softmax", "sqrt",
    "stack", "swap_last_axes", "take", "tanh", "tmean", "transpose", "tsum",
    "where",
]
