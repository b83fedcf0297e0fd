"""Tensor container, recording tape and reverse-mode backward pass."""

from __future__ import annotations

import threading
import weakref
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, ShapeError, StateError
from .. import rng

_local = threading.local()


class Tensor:
    """Dense float64 array with an optional gradient slot.

    Values live in ``data`` (a C-ordered numpy array).  Scalars use shape
    ``()``.  ``grad`` is either ``None`` or an array shaped like ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        if any(d <= 0 for d in arr.shape):
            raise ShapeError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        tracker = getattr(_local, "tracker", None)
        if tracker is not None:
            tracker.allocate(self, arr.nbytes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Operator sugar over the functions in ``ops``.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.mul_scalar(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul_scalar(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of differentiable operations.

    Operations are recorded only while the tape is active (inside its
    ``with`` block) and only when at least one input requires a gradient.
    A tape supports exactly one backward pass.
    """

    def __init__(self):
        self.records: list[tuple[tuple[Tensor, ...], Tensor, BackwardFn]] = []
        self.spent = False

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, inputs: tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn) -> None:
        if self.spent:
            raise StateError("cannot record on a tape that has already run backward")
        self.records.append((inputs, output, backward_fn))

    def backward(self, loss: Tensor) -> None:
        backward(loss, self)


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def current_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def apply_op(value: np.ndarray, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    """Wrap ``value`` as a Tensor and record it on the active tape if needed."""
    tape = current_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=track)
    if track:
        tape.record(inputs, out, backward_fn)
    return out


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires-grad leaf recorded in ``tape``.

    Leaves that the loss does not depend on receive zeros.  Gradients are
    accumulated into any existing ``grad``.
    """
    if loss.size != 1:
        raise ContractError(f"loss must be a scalar, got shape {loss.shape}")
    if tape.spent:
        raise StateError("tape already consumed by a previous backward call")
    tape.spent = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(out) for _, out, _ in tape.records}
    leaves: dict[int, Tensor] = {}
    for inputs, _, _ in tape.records:
        for t in inputs:
            if t.requires_grad and id(t) not in produced:
                leaves[id(t)] = t

    for inputs, out, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi

    for key, leaf in leaves.items():
        g = grads.get(key)
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g if leaf.grad is None else leaf.grad + g
    tape.records.clear()


def no_tape():
    """Context in which nothing is recorded, even inside an outer tape."""
    return _Suspend()


class _Suspend:
    def __enter__(self):
        stack = _tape_stack()
        self._saved = list(stack)
        stack.clear()

    def __exit__(self, *exc):
        stack = _tape_stack()
        stack[:] = self._saved


class MemoryTracker:
    """High-water mark of bytes held by live tensors created while active."""

    def __init__(self, baseline: int = 0):
        self.live = baseline
        self.peak = baseline

    def allocate(self, tensor: Tensor, nbytes: int) -> None:
        self.live += nbytes
        if self.live > self.peak:
            self.peak = self.live
        weakref.finalize(tensor, self._release, nbytes)

    def _release(self, nbytes: int) -> None:
        self.live -= nbytes


@contextmanager
def track_memory(baseline: int = 0):
    tracker = MemoryTracker(baseline)
    previous = getattr(_local, "tracker", None)
    _local.tracker = tracker
    try:
        yield tracker
    finally:
        _local.tracker = previous


def create(shape, init: str = "zeros", *, value: float = 0.0, seed: int | None = None,
           mean: float = 0.0, std: float = 1.0, requires_grad: bool = False,
           name: str | None = None) -> Tensor:
    """Allocate a tensor.

    ``init`` is ``"zeros"``, ``"constant"`` (filled with ``value``) or
    ``"gaussian"`` (Box-Muller draws keyed by ``seed``, see :mod:`mimovq.rng`).
    """
    shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ShapeError(f"extents must be positive, got {shape}")
    if init == "zeros":
        data = np.zeros(shape)
    elif init == "constant":
        data = np.full(shape, float(value))
    elif init == "gaussian":
        if std < 0:
            raise ShapeError(f"std must be non-negative, got {std}")
        if seed is None:
            raise ValueError("gaussian init needs a seed")
        data = rng.gaussian(seed, shape, mean, std)
    else:
        raise ValueError(f"unknown init {init!r}")
    return Tensor(data, requires_grad=requires_grad, name=name)
