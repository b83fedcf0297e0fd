"""Finite-difference cases shared by the autodiff tests and the acceptance suite."""

import numpy as np

from mimovq.autodiff import (
    Tensor, add, conv2d, conv_transpose2d, exp, expand_bias, expm1, matmul, mean, mul,
    mul_scalar, permute, relu, reshape, square, sub, sum as tsum, take_rows,
)


def _weighted(op, shape_out, seed):
    w = Tensor(np.random.default_rng(seed + 1000).normal(size=shape_out))
    return lambda *ts: tsum(mul(op(*ts), w))


def _away_from_zero(rng, shape):
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 1e-2, 0.5, x)


# (name, builder) -> builder(rng) returns (fn, inputs)
def _cases():
    def unary(op, shape=(3, 4), gen=None):
        def build(rng, seed):
            x = (gen or (lambda r, s: r.normal(size=s)))(rng, shape)
            out_shape = op(Tensor(x)).shape
            return _weighted(op, out_shape, seed), [Tensor(x)]
        return build

    def binary(op, sa, sb):
        def build(rng, seed):
            a, b = rng.normal(size=sa), rng.normal(size=sb)
            return _weighted(op, op(Tensor(a), Tensor(b)).shape, seed), [Tensor(a), Tensor(b)]
        return build

    def conv(stride, pad, kern, transpose):
        def build(rng, seed):
            if transpose:
                x, k = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, kern, kern))
                op = lambda a, b: conv_transpose2d(a, b, stride, pad)
            else:
                x, k = rng.normal(size=(2, 5, 5)), rng.normal(size=(3, 2, kern, kern))
                op = lambda a, b: conv2d(a, b, stride, pad)
            return _weighted(op, op(Tensor(x), Tensor(k)).shape, seed), [Tensor(x), Tensor(k)]
        return build

    def bias(rng, seed):
        b = rng.normal(size=3)
        op = lambda t: expand_bias(t, (2, 3, 2, 2))
        return _weighted(op, (2, 3, 2, 2), seed), [Tensor(b)]

    def rows(rng, seed):
        table = rng.normal(size=(5, 3))
        idx = rng.integers(0, 5, size=7)
        op = lambda t: take_rows(t, idx)
        return _weighted(op, (7, 3), seed), [Tensor(table)]

    return {
        "relu": unary(relu, gen=_away_from_zero),
        "square": unary(square),
        "exp": unary(exp),
        "expm1": unary(expm1),
        "mean": lambda rng, seed: (mean, [Tensor(rng.normal(size=(4, 3)))]),
        "sum": lambda rng, seed: (tsum, [Tensor(rng.normal(size=(4, 3)))]),
        "mul_scalar": unary(lambda t: mul_scalar(t, -1.7)),
        "reshape": unary(lambda t: reshape(t, (2, 6))),
        "permute": unary(lambda t: permute(t, (1, 2, 0)), shape=(2, 3, 4)),
        "add": binary(add, (3, 4), (3, 4)),
        "sub": binary(sub, (3, 4), (3, 4)),
        "mul": binary(mul, (3, 4), (3, 4)),
        "matmul": binary(matmul, (3, 4), (4, 2)),
        "conv2d_s1p1": conv(1, 1, 3, False),
        "conv2d_s2p1": conv(2, 1, 3, False),
        "conv_t_s2p1": conv(2, 1, 4, True),
        "conv_t_s1p0": conv(1, 0, 2, True),
        "expand_bias": bias,
        "take_rows": rows,
    }


CASES = _cases()
