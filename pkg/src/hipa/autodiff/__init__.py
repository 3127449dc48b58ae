"""Minimal reverse-mode autodiff over dense numpy-backed tensors."""

from .tensor import Tape, Tensor, active_tape, full, ones, record, zeros
from . import ops
from .ops import (
    absolute,
    add,
    concat,
    conv2d,
    depthwise_conv2d,
    gelu,
    global_avg_pool,
    layer_norm,
    matmul,
    mean,
    mul,
    neg,
    pad_reflect,
    permute,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    reshape,
    sigmoid,
    slice_,
    softmax,
    sub,
    sum_,
)

__all__ = [
    "Tape",
    "Tensor",
    "active_tape",
    "zeros",
    "ones",
    "full",
    "record",
    "ops",
    "add",
    "sub",
    "mul",
    "neg",
    "absolute",
    "sum_",
    "mean",
    "matmul",
    "conv2d",
    "depthwise_conv2d",
    "relu",
    "gelu",
    "sigmoid",
    "softmax",
    "layer_norm",
    "reshape",
    "permute",
    "concat",
    "slice_",
    "pad_reflect",
    "pixel_shuffle",
    "pixel_unshuffle",
    "global_avg_pool",
]
