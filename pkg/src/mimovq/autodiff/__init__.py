"""Minimal float64 tensor engine with reverse-mode differentiation."""

from .conv import conv2d, conv_transpose2d
from .ops import (
    add, exp, expand_bias, expm1, matmul, mean, mul, mul_scalar, permute, relu, reshape,
    square, stop_gradient, straight_through, sub, sum, take_rows,
)
from .optim import AdamState, adam_step
from .tensor import Tape, Tensor, backward, create, current_tape, no_tape, track_memory

__all__ = [
    "Tape", "Tensor", "AdamState", "adam_step", "add", "backward", "conv2d",
    "conv_transpose2d", "create", "current_tape", "exp", "expand_bias", "expm1", "matmul",
    "mean", "mul", "mul_scalar", "no_tape", "permute", "relu", "reshape", "square",
    "stop_gradient", "straight_through", "sub", "sum", "take_rows", "track_memory",
]
