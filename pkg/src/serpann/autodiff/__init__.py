"""Minimal reverse-mode automatic differentiation on numpy arrays."""

from .ops import (BatchNormState, absolute, add, concat, avg_pool2d, batch_norm2d, conv2d, div,
                  dropout, global_avg_pool, layer_norm, linear, masked_l1, matmul, mean, mul,
                  multi_head_attention, relu, reshape, sigmoid, softmax, softmax_cross_entropy,
                  stack, sub, sum, transpose)
from .tensor import Tensor, as_tensor, default_dtype, get_default_dtype, is_grad_enabled, no_grad

__all__ = [
    "Tensor", "as_tensor", "default_dtype", "get_default_dtype", "is_grad_enabled", "no_grad",
    "BatchNormState", "absolute", "add", "concat", "avg_pool2d", "batch_norm2d", "conv2d", "div",
    "dropout", "global_avg_pool", "layer_norm", "linear", "masked_l1", "matmul", "mean", "mul",
    "multi_head_attention", "relu", "reshape", "sigmoid", "softmax", "softmax_cross_entropy",
    "stack", "sub", "sum", "transpose",
]
