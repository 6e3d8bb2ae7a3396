"""Minimal reverse-mode autodiff tensor.

Tensors wrap a numpy array plus an optional gradient slot. Operations record
a tape (parent links and a backward closure) whenever gradients are enabled
and at least one input requires them. ``backward`` on a scalar loss walks the
tape once in reverse topological order; a second call without re-running the
forward pass is an error.

Precision is a global policy: float64 for tests and verification, float32
for training, switched with :func:`set_default_dtype` or the :func:`precision`
context manager.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, ShapeError

_DTYPES = {"f32": np.float32, "f64": np.float64}

_default_dtype = np.float64
_grad_enabled = True


def default_dtype():
    return _default_dtype


def set_default_dtype(dtype) -> None:
    """Set the global precision policy ("f32"/"f64" or a numpy dtype)."""
    global _default_dtype
    if isinstance(dtype, str):
        if dtype not in _DTYPES:
            raise ContractError(f"unknown precision {dtype!r}, expected 'f32' or 'f64'")
        dtype = _DTYPES[dtype]
    if dtype not in (np.float32, np.float64):
        raise ContractError("precision must be float32 or float64")
    _default_dtype = dtype


@contextmanager
def precision(dtype):
    """Temporarily switch the global precision policy."""
    global _default_dtype
    saved = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _default_dtype = saved


@contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation passes)."""
    global _grad_enabled
    saved = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = saved


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """N-d array (rank 0..4) with an optional gradient slot and tape links."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            arr = data.data
        else:
            arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_default_dtype)
        if arr.ndim > 4:
            raise ShapeError(f"rank {arr.ndim} exceeds the supported maximum of 4")
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._grad_fn = None
        self._backward_done = False

    # -- basic introspection -------------------------------------------------

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # -- tape ------------------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            # copy: g may alias a downstream grad buffer or a broadcast view
            self.grad = np.array(np.broadcast_to(g, self.data.shape), dtype=self.data.dtype)
        else:
            self.grad += g

    def _accumulate_owned(self, g: np.ndarray) -> None:
        """Like _accumulate, but g is a freshly allocated array the caller
        relinquishes, so the first touch can take it without copying."""
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode accumulation from a scalar loss into every reachable grad slot."""
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar, got dims {self.dims}")
        if self._grad_fn is None and not self.requires_grad:
            raise ContractError("backward on a detached tensor with no recorded graph")
        if self._backward_done:
            raise ContractError("backward called twice without re-running the forward pass")
        self._backward_done = True

        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in order:
            if node._grad_fn is not None:
                node._grad_fn(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(_as_tensor(other), -1.0))

    def sum(self):
        return tsum(self)

    def reshape(self, *dims):
        return reshape(self, *dims)


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse topological order, iterative so deep graphs cannot overflow."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    order.reverse()
    return order


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn) -> Tensor:
    """Wrap an op result, recording the tape only when it can matter."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._grad_fn is not None for p in parents):
        out._parents = parents
        out._grad_fn = grad_fn
        out.requires_grad = True
    return out


def _unbroadcast(g: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's original dims."""
    if g.shape == dims:
        return g
    axes = tuple(i for i, (a, b) in enumerate(zip(dims, g.shape)) if a == 1 and b != 1)
    return g.sum(axis=axes, keepdims=True)


def _check_broadcast(a: Tensor, b: Tensor) -> None:
    if a.data.ndim != b.data.ndim:
        raise ShapeError(f"rank mismatch {a.dims} vs {b.dims}; broadcast requires equal rank")
    for axis, (x, y) in enumerate(zip(a.dims, b.dims)):
        if x != y and x != 1 and y != 1:
            raise ShapeError(f"axis {axis}: extents {x} and {y} are not broadcastable")


# -- elementwise ops ---------------------------------------------------------


def add(a, b) -> Tensor:
    """Elementwise sum; either operand may broadcast along size-1 axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)
    out_data = a.data + b.data

    def grad_fn(g):
        if a.requires_grad or a._grad_fn is not None:
            a._accumulate(_unbroadcast(g, a.dims))
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate(_unbroadcast(g, b.dims))

    return _make(out_data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    """Elementwise product; either operand may broadcast along size-1 axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b)
    out_data = a.data * b.data

    def grad_fn(g):
        if a.requires_grad or a._grad_fn is not None:
            a._accumulate_owned(_unbroadcast(g * b.data, a.dims))
        if b.requires_grad or b._grad_fn is not None:
            b._accumulate_owned(_unbroadcast(g * a.data, b.dims))

    return _make(out_data, (a, b), grad_fn)


def scale(x, k: float) -> Tensor:
    x = _as_tensor(x)
    k = float(k)

    def grad_fn(g):
        x._accumulate_owned(g * k)

    return _make(x.data * k, (x,), grad_fn)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out_data = np.maximum(x.data, 0)

    def grad_fn(g):
        x._accumulate_owned(g * (x.data > 0))

    return _make(out_data, (x,), grad_fn)


def sigmoid(x) -> Tensor:
    """Numerically stable logistic; outputs clamped strictly inside (0, 1)."""
    x = _as_tensor(x)
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out_data[~pos] = e / (1.0 + e)
    tiny = np.nextafter(d.dtype.type(0), d.dtype.type(1))
    top = np.nextafter(d.dtype.type(1), d.dtype.type(0))
    np.clip(out_data, tiny, top, out=out_data)

    def grad_fn(g):
        x._accumulate_owned(g * out_data * (1.0 - out_data))

    return _make(out_data, (x,), grad_fn)


def tsum(x) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    x = _as_tensor(x)
    out_data = np.asarray(x.data.sum())

    def grad_fn(g):
        x._accumulate(np.broadcast_to(g, x.dims))

    return _make(out_data, (x,), grad_fn)


def reshape(x, *dims) -> Tensor:
    x = _as_tensor(x)
    if len(dims) == 1 and isinstance(dims[0], (tuple, list)):
        dims = tuple(dims[0])
    new = np.reshape(x.data, dims)

    def grad_fn(g):
        x._accumulate(g.reshape(x.dims))

    return _make(new, (x,), grad_fn)


def ones_like(x: Tensor) -> Tensor:
    return Tensor(np.ones_like(x.data))


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data))
