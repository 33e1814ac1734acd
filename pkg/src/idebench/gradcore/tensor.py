"""Dense float64 tensors with a reverse-mode tape.

Each op records its parents and a closure that pushes the output gradient
back to them. Networks in this package are tiny, so the tape works at
tensor granularity and favours clarity over throughput.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, UsageError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # -- construction helpers -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    @staticmethod
    def _make(data, parents: tuple, backward: Callable) -> "Tensor":
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        if not needs:
            return Tensor(data)
        out = Tensor(data, requires_grad=True, _parents=parents)
        out._backward = backward
        return out

    # -- differentiation -------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        # interior nodes start from zero; leaves keep whatever was accumulated
        for node in order:
            if node._parents:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic ------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g, a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g, b.shape)
        return Tensor._make(a.data + b.data, (a, b), back)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        a = self

        def back(g):
            a.grad -= g
        return Tensor._make(-a.data, (a,), back)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g * b.data, a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(g * a.data, b.shape)
        return Tensor._make(a.data * b.data, (a, b), back)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other

        def back(g):
            if a.requires_grad:
                a.grad += _unbroadcast(g / b.data, a.shape)
            if b.requires_grad:
                b.grad += _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return Tensor._make(a.data / b.data, (a, b), back)

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, p: float) -> "Tensor":
        a = self

        def back(g):
            a.grad += g * p * a.data ** (p - 1)
        return Tensor._make(a.data ** p, (a,), back)

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self, other
        if a.shape[-1] != b.shape[0]:
            raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not conform")

        def back(g):
            if a.requires_grad:
                if b.ndim == 1:
                    a.grad += np.multiply.outer(g, b.data)
                else:
                    a.grad += g @ b.data.T
            if b.requires_grad:
                if a.ndim == 1:
                    b.grad += np.multiply.outer(a.data, g)
                else:
                    b.grad += a.data.T @ g
        return Tensor._make(a.data @ b.data, (a, b), back)

    # -- unary functions -------------------------------------------------------

    def exp(self) -> "Tensor":
        a = self
        out = np.exp(a.data)

        def back(g):
            a.grad += g * out
        return Tensor._make(out, (a,), back)

    def log(self) -> "Tensor":
        a = self

        def back(g):
            a.grad += g / a.data
        return Tensor._make(np.log(a.data), (a,), back)

    def sqrt(self) -> "Tensor":
        a = self
        out = np.sqrt(a.data)

        def back(g):
            a.grad += g * 0.5 / out
        return Tensor._make(out, (a,), back)

    def tanh(self) -> "Tensor":
        a = self
        out = np.tanh(a.data)

        def back(g):
            a.grad += g * (1.0 - out * out)
        return Tensor._make(out, (a,), back)

    def sigmoid(self) -> "Tensor":
        a = self
        out = _sigmoid(a.data)

        def back(g):
            a.grad += g * out * (1.0 - out)
        return Tensor._make(out, (a,), back)

    def leaky_relu(self, slope: float) -> "Tensor":
        a = self
        mask = a.data > 0
        out = np.where(mask, a.data, slope * a.data)

        def back(g):
            a.grad += g * np.where(mask, 1.0, slope)
        return Tensor._make(out, (a,), back)

    def clamp(self, lo: float, hi: float) -> "Tensor":
        a = self
        inside = (a.data >= lo) & (a.data <= hi)

        def back(g):
            a.grad += g * inside
        return Tensor._make(np.clip(a.data, lo, hi), (a,), back)

    # -- reductions and shape ops ---------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a.grad += np.broadcast_to(g, a.shape)
        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            n = np.prod([self.shape[i] for i in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max_detached(self, axis=None, keepdims: bool = False) -> "Tensor":
        """Max as a constant (used for log-sum-exp stabilisation)."""
        return Tensor(self.data.max(axis=axis, keepdims=keepdims))

    def reshape(self, *shape) -> "Tensor":
        a = self

        def back(g):
            a.grad += g.reshape(a.shape)
        return Tensor._make(a.data.reshape(*shape), (a,), back)

    def transpose(self, *axes) -> "Tensor":
        a = self
        axes = axes or tuple(reversed(range(a.ndim)))
        inv = np.argsort(axes)

        def back(g):
            a.grad += g.transpose(inv)
        return Tensor._make(a.data.transpose(axes), (a,), back)

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, idx) -> "Tensor":
        a = self

        def back(g):
            np.add.at(a.grad, idx, g)
        return Tensor._make(a.data[idx], (a,), back)

    def take_rows(self, rows: np.ndarray) -> "Tensor":
        """Gather rows along axis 0 (embedding lookup)."""
        a = self
        rows = np.asarray(rows, dtype=np.intp)

        def back(g):
            np.add.at(a.grad, rows, g)
        return Tensor._make(a.data[rows], (a,), back)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    """Build an input tensor, rejecting NaN and Inf."""
    arr = np.array(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor input contains NaN or Inf")
    return Tensor(arr, requires_grad=requires_grad, name=name)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                p.grad += g[tuple(sl)]
    return Tensor._make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), back)


def logsumexp(x: Tensor, axis: int) -> Tensor:
    m = x.max_detached(axis=axis, keepdims=True)
    return ((x - m).exp().sum(axis=axis, keepdims=True)).log() + m


def log_softmax(x: Tensor, axis: int) -> Tensor:
    return x - logsumexp(x, axis)


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    return x / (x * x).sum(axis=axis, keepdims=True).sqrt()


def leaves(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
