"""Differentiable operations.

Shapes must match exactly; nothing broadcasts.  Per-channel biases are
expanded to the full activation shape with :func:`expand_bias` first.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, apply_op


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return apply_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return apply_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    _same_shape(a, b, "mul")
    return apply_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def mul_scalar(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return apply_op(x.data * c, (x,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    # Strict inequality: the subgradient at exactly 0 is 0.
    mask = x.data > 0
    return apply_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def square(x: Tensor) -> Tensor:
    return apply_op(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return apply_op(y, (x,), lambda g: (g * y,))


def expm1(x: Tensor) -> Tensor:
    return apply_op(np.expm1(x.data), (x,), lambda g: (g * np.exp(x.data),))


def mean(x: Tensor) -> Tensor:
    n = x.size
    return apply_op(np.array(x.data.mean()), (x,), lambda g: (np.full(x.shape, float(g) / n),))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return apply_op(np.array(x.data.sum()), (x,), lambda g: (np.full(x.shape, float(g)),))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size or any(s <= 0 for s in shape):
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    src = x.shape
    return apply_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"permute: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))
    return apply_op(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                    lambda g: (g.transpose(inverse),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return apply_op(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def expand_bias(bias: Tensor, shape) -> Tensor:
    """Materialize a per-channel bias ``[C]`` over ``shape`` (channel axis
    is 0 for 3-d shapes, 1 for 4-d batched shapes)."""
    shape = tuple(shape)
    axis = 1 if len(shape) == 4 else 0
    if bias.ndim != 1 or shape[axis] != bias.shape[0]:
        raise ShapeError(f"expand_bias: bias {bias.shape} does not fit {shape}")
    view = [1] * len(shape)
    view[axis] = bias.shape[0]
    value = np.broadcast_to(bias.data.reshape(view), shape).copy()
    other = tuple(i for i in range(len(shape)) if i != axis)
    return apply_op(value, (bias,), lambda g: (g.sum(axis=other),))


def take_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """Gather ``table[index]`` for a 2-d ``table``; gradients scatter-add back."""
    index = np.asarray(index, dtype=np.int64)

    def grad(g):
        out = np.zeros_like(table.data)
        np.add.at(out, index, g)
        return (out,)

    return apply_op(table.data[index], (table,), grad)


def stop_gradient(x: Tensor) -> Tensor:
    """Same values, detached: nothing upstream of ``x`` receives gradient."""
    return Tensor(x.data)


def straight_through(z_e: Tensor, z_q: Tensor) -> Tensor:
    """Forward value ``z_q``; the backward pass copies the incoming gradient
    to ``z_e`` unchanged and sends nothing to ``z_q``."""
    _same_shape(z_e, z_q, "straight_through")
    return apply_op(z_q.data.copy(), (z_e,), lambda g: (g,))
