"""Central finite-difference gradients for checking backward rules."""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward


def numerical_grad(fn, inputs: list[Tensor], step: float = 1e-5) -> list[np.ndarray]:
    grads = []
    for t in inputs:
        g = np.zeros_like(t.data)
        flat, gflat = t.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn(*inputs).item()
            flat[i] = orig - step
            down = fn(*inputs).item()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def analytic_grad(fn, inputs: list[Tensor]) -> list[np.ndarray]:
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = fn(*inputs)
    backward(out, tape)
    return [t.grad for t in inputs]


def max_relative_error(fn, inputs: list[Tensor], step: float = 1e-5, floor: float = 1e-4) -> float:
    """Largest elementwise ``|a - n| / max(|a|, |n|, floor)`` over all inputs."""
    worst = 0.0
    for a, n in zip(analytic_grad(fn, inputs), numerical_grad(fn, inputs, step)):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
