"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the handful of primitives needed by an MLP with two linear heads and
its losses are provided. A :class:`Tape` records every operation whose
inputs require gradients; ``tape.backward(loss)`` walks the record once in
reverse and writes ``grad`` on every leaf that took part.

Typical use::

    with Tape() as tape:
        loss = mean(relu(add_bias(matmul(x, w), b)))
    tape.backward(loss)
    w.grad, b.grad
"""
from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

EPS = 1e-12

_local = threading.local()
_tapes: weakref.WeakValueDictionary[int, "Tape"] = weakref.WeakValueDictionary()


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class GradientError(RuntimeError):
    """Invalid request to the backward pass."""


class Tensor:
    """Row-major float64 array, optionally tracked on a tape."""

    __slots__ = ("data", "grad", "requires_grad", "tape_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape_id: int | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self.tape_id is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # operator sugar for the few elementwise ops the losses need
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class _Node:
    out: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], tuple[np.ndarray | None, ...]]


class Tape:
    """Ordered record of primitive operations for one forward/backward pass.

    The tape is entered as a context manager; operations executed inside it
    are recorded if any of their inputs requires a gradient. A tape supports
    exactly one backward pass and should be discarded afterwards.
    """

    _counter = 0
    _counter_lock = threading.Lock()

    def __init__(self):
        with Tape._counter_lock:
            Tape._counter += 1
            self.id = Tape._counter
        self.nodes: list[_Node] = []
        self.consumed = False
        _tapes[self.id] = self

    def __enter__(self) -> "Tape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, out: Tensor, inputs: Sequence[Tensor], vjp) -> None:
        out.tape_id = self.id
        out.requires_grad = True
        self.nodes.append(_Node(out, tuple(inputs), vjp))

    def backward(self, loss: Tensor) -> None:
        if self.consumed:
            raise GradientError("backward already ran on this tape; record a new one")
        if loss.data.size != 1:
            raise GradientError(f"loss must be a scalar, got shape {loss.shape}")
        if loss.tape_id != self.id:
            raise GradientError("loss is detached from this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.out), None)
            if g_out is None:
                continue
            for inp, g in zip(node.inputs, node.vjp(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if inp.is_leaf:
                    leaves[key] = inp
        for key, leaf in leaves.items():
            leaf.grad = grads[key]


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def backward(loss: Tensor) -> None:
    """Run the backward pass of the tape that produced ``loss``."""
    tape = _tapes.get(loss.tape_id) if loss.tape_id is not None else None
    if tape is None:
        raise GradientError("loss is detached: no live tape recorded it")
    tape.backward(loss)


def _emit(data: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = False
    out.tape_id = None
    out.name = None
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(out, inputs, vjp)
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def vjp(g):
        return g @ B.T, A.T @ g

    return _emit(A @ B, (a, b), vjp)


def add_bias(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 1 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias trailing dimension mismatch: {a.shape} + {b.shape}")

    def vjp(g):
        return g, g.sum(axis=0)

    return _emit(a.data + b.data, (a, b), vjp)


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.data.size != 1 and b.data.size != 1:
        raise ShapeError(f"{op} shape mismatch: {a.shape} vs {b.shape}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.asarray(g.sum()).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    A, B = a.data, b.data
    return _emit(A * B, (a, b),
                 lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)))


def neg(a: Tensor) -> Tensor:
    return _emit(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function, clamped to ``[EPS, 1 - EPS]``.

    The local derivative is ``s * (1 - s)`` evaluated at the clamped value,
    so ``log(sigmoid(x))`` keeps a gradient close to 1 even when saturated.
    """
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    s = np.clip(s, EPS, 1.0 - EPS)
    ds = s * (1.0 - s)
    return _emit(s, (a,), lambda g: (g * ds,))


def log(a: Tensor) -> Tensor:
    """Natural log with the argument clamped to ``[EPS, 1 - EPS]``.

    Intended for probabilities. The gradient is zero where the clamp is active.
    """
    x = a.data
    inside = (x >= EPS) & (x <= 1.0 - EPS)
    xc = np.clip(x, EPS, 1.0 - EPS)
    return _emit(np.log(xc), (a,), lambda g: (np.where(inside, g / xc, 0.0),))


def one_minus(a: Tensor) -> Tensor:
    return _emit(1.0 - a.data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# row-wise
# ---------------------------------------------------------------------------

def _check_matrix(a: Tensor, op: str) -> None:
    if a.data.ndim != 2 or a.shape[1] < 1:
        raise ShapeError(f"{op} expects a non-empty matrix, got {a.shape}")


def softmax(a: Tensor) -> Tensor:
    _check_matrix(a, "softmax")
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _emit(p, (a,), vjp)


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax via log-sum-exp."""
    _check_matrix(a, "log_softmax")
    z = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def vjp(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return _emit(out, (a,), vjp)


def pick(a: Tensor, index) -> Tensor:
    """``out[r] = a[r, index[r]]`` for a matrix ``a``."""
    _check_matrix(a, "pick")
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != (a.shape[0],):
        raise ShapeError(f"pick needs one index per row: {idx.shape} for {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[1]):
        raise IndexError(f"pick index out of range for width {a.shape[1]}")
    rows = np.arange(a.shape[0])

    def vjp(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        return (full,)

    return _emit(a.data[rows, idx], (a,), vjp)


def row_sum(a: Tensor) -> Tensor:
    _check_matrix(a, "row_sum")
    n = a.shape[1]
    return _emit(a.data.sum(axis=1), (a,),
                 lambda g: (np.repeat(g[:, None], n, axis=1),))


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return _emit(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.data.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    return _emit(np.asarray(a.data.mean()), (a,),
                 lambda g: (np.full(shape, float(g) / n),))
