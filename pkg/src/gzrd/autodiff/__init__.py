"""Minimal reverse-mode autodiff over numpy, with Adam."""

from .ops import (
    attention_weights,
    conv1d,
    conv2d,
    conv_out_len,
    gelu,
    layer_norm,
    linear,
    multi_head_attention,
    softmax,
    softmax_cross_entropy,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, add, concat, getitem, matmul, mul, no_grad, reshape, transpose

__all__ = [
    "Adam",
    "AdamState",
    "Tensor",
    "adam_step",
    "add",
    "attention_weights",
    "concat",
    "conv1d",
    "conv2d",
    "conv_out_len",
    "gelu",
    "getitem",
    "layer_norm",
    "linear",
    "matmul",
    "mul",
    "multi_head_attention",
    "no_grad",
    "reshape",
    "softmax",
    "softmax_cross_entropy",
    "transpose",
]
