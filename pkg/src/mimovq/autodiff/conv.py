"""2-d convolution and its adjoint (transposed convolution).

Activations are ``[C, H, W]`` or batched ``[N, C, H, W]``.  ``conv2d``
kernels are ``[C_out, C_in, kh, kw]``; ``conv_transpose2d`` takes the same
layout and applies the adjoint map, so it goes from ``C_out`` channels back
to ``C_in``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, apply_op


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected [C,H,W] or [N,C,H,W], got {x.shape}")


def _out_extent(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _columns(x: np.ndarray, kh: int, kw: int, stride: int, padding: int) -> np.ndarray:
    """Patch matrix ``[N*oh*ow, C*kh*kw]``."""
    n, c, h, w = x.shape
    oh, ow = _out_extent(h, kh, stride, padding), _out_extent(w, kw, stride, padding)
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :oh, :ow]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)


def _forward(x: np.ndarray, k: np.ndarray, stride: int, padding: int) -> np.ndarray:
    n, _, h, w = x.shape
    co, _, kh, kw = k.shape
    oh, ow = _out_extent(h, kh, stride, padding), _out_extent(w, kw, stride, padding)
    out = _columns(x, kh, kw, stride, padding) @ k.reshape(co, -1).T
    return np.ascontiguousarray(out.reshape(n, oh, ow, co).transpose(0, 3, 1, 2))


def _input_grad(g: np.ndarray, k: np.ndarray, stride: int, padding: int,
                in_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`_forward` with respect to its input."""
    n, co, oh, ow = g.shape
    _, ci, kh, kw = k.shape
    h, w = in_hw
    cols = g.transpose(0, 2, 3, 1).reshape(-1, co) @ k.reshape(co, -1)
    cols = cols.reshape(n, oh, ow, ci, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((n, ci, max(hp, (oh - 1) * stride + kh), max(wp, (ow - 1) * stride + kw)))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[:, :, i, j]
    return out[:, :, padding:padding + h, padding:padding + w]


def _kernel_grad(x: np.ndarray, g: np.ndarray, stride: int, padding: int,
                 kshape: tuple[int, ...]) -> np.ndarray:
    co, ci, kh, kw = kshape
    cols = _columns(x, kh, kw, stride, padding)
    return (g.transpose(1, 0, 2, 3).reshape(co, -1) @ cols).reshape(kshape)


def _check(stride: int, padding: int) -> None:
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    _check(stride, padding)
    xb, single = _batched(x.data)
    if kernel.ndim != 4 or kernel.shape[1] != xb.shape[1]:
        raise ShapeError(f"conv2d: kernel {kernel.shape} does not fit input {x.shape}")
    kh, kw = kernel.shape[2:]
    h, w = xb.shape[2:]
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{w} (pad {padding})")
    out = _forward(xb, kernel.data, stride, padding)

    def grad(g):
        gb = g[None] if single else g
        dx = _input_grad(gb, kernel.data, stride, padding, (h, w))
        dk = _kernel_grad(xb, gb, stride, padding, kernel.shape)
        return (dx[0] if single else dx, dk)

    return apply_op(out[0] if single else out, (x, kernel), grad)


def conv_transpose2d(y: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Output extent ``(h - 1) * stride - 2 * padding + kh`` along each axis."""
    _check(stride, padding)
    yb, single = _batched(y.data)
    if kernel.ndim != 4 or kernel.shape[0] != yb.shape[1]:
        raise ShapeError(f"conv_transpose2d: kernel {kernel.shape} does not fit input {y.shape}")
    kh, kw = kernel.shape[2:]
    h, w = yb.shape[2:]
    oh, ow = (h - 1) * stride - 2 * padding + kh, (w - 1) * stride - 2 * padding + kw
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv_transpose2d: geometry yields empty output {oh}x{ow}")
    out = _input_grad(yb, kernel.data, stride, padding, (oh, ow))

    def grad(g):
        gb = g[None] if single else g
        dy = _forward(gb, kernel.data, stride, padding)
        dk = _kernel_grad(gb, yb, stride, padding, kernel.shape)
        return (dy[0] if single else dy, dk)

    out = np.ascontiguousarray(out)
    return apply_op(out[0] if single else out, (y, kernel), grad)
