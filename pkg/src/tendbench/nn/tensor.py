"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray and records the operations that produced
it. ``backward()`` runs one reverse sweep over the recorded graph in
topological order, accumulating gradients additively into every reachable
leaf. Broadcasting follows numpy; gradients of broadcast operands are summed
back to the operand's shape.

Graph recording is skipped inside :func:`no_grad` blocks and for results that
do not depend on any gradient-requiring tensor, which keeps rollout-time
forward passes cheap.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference-mode forwards)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64) if not isinstance(data, np.ndarray) else data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._prev: tuple[Tensor, ...] = ()
        self._backward = None

    # -- graph -----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        # storing g without a copy is safe: no backward rule mutates a gradient
        # array in place after handing it over (accumulation reassigns)
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self, seed=None):
        """Reverse sweep from this tensor; ``seed`` defaults to ones."""
        if self._backward is None and not self._prev and not self.requires_grad:
            raise RuntimeError("backward() on a tensor with no recorded graph")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = (
            np.ones_like(self.data) if seed is None
            else np.broadcast_to(np.asarray(seed, dtype=self.data.dtype), self.data.shape).copy()
        )
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        other = _wrap(other)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(_wrap(other), power(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def item(self) -> float:
        return float(self.data)


class Parameter(Tensor):
    """Learnable leaf tensor; always requires a gradient."""

    __slots__ = ()

    def __init__(self, data, name: str | None = None):
        super().__init__(np.asarray(data), requires_grad=True, name=name)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(t.requires_grad or t._prev for t in inputs):
        out.requires_grad = True
        out._prev = inputs
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- elementwise ----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad or a._prev:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._prev:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _record(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad or a._prev:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad or b._prev:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _record(data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    data = a.data ** exponent

    def backward(g):
        a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return _record(data, (a,), backward)


def exp(a) -> Tensor:
    a = _wrap(a)
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _record(data, (a,), backward)


def log(a) -> Tensor:
    a = _wrap(a)
    data = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _record(data, (a,), backward)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    data = np.sqrt(a.data)

    def backward(g):
        a._accumulate(g * 0.5 / data)

    return _record(data, (a,), backward)


def tanh(a) -> Tensor:
    a = _wrap(a)
    data = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - data * data))

    return _record(data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = _wrap(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        a._accumulate(g * data * (1.0 - data))

    return _record(data, (a,), backward)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties send the gradient to the first operand."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad or a._prev:
            a._accumulate(_unbroadcast(np.where(take_a, g, 0.0), a.data.shape))
        if b.requires_grad or b._prev:
            b._accumulate(_unbroadcast(np.where(take_a, 0.0, g), b.data.shape))

    return _record(data, (a, b), backward)


def minimum(a, b) -> Tensor:
    """Elementwise min; ties send the gradient to the first operand."""
    a, b = _wrap(a), _wrap(b)
    take_a = a.data <= b.data
    data = np.where(take_a, a.data, b.data)

    def backward(g):
        if a.requires_grad or a._prev:
            a._accumulate(_unbroadcast(np.where(take_a, g, 0.0), a.data.shape))
        if b.requires_grad or b._prev:
            b._accumulate(_unbroadcast(np.where(take_a, 0.0, g), b.data.shape))

    return _record(data, (a, b), backward)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient passes only where no clamping occurred."""
    a = _wrap(a)
    data = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        a._accumulate(np.where(inside, g, 0.0))

    return _record(data, (a,), backward)


def where(cond, a, b) -> Tensor:
    """Select by a boolean array (non-differentiable condition)."""
    a, b = _wrap(a), _wrap(b)
    cond = np.asarray(cond, dtype=bool)
    data = np.where(cond, a.data, b.data)

    def backward(g):
        if a.requires_grad or a._prev:
            a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.data.shape))
        if b.requires_grad or b._prev:
            b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.data.shape))

    return _record(data, (a, b), backward)


# -- reductions -----------------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape))
            return
        gg = g
        if not keepdims:
            gg = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(gg, a.data.shape))

    return _record(data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- shape ops --------------------------------------------------------------


def reshape(a, *shape) -> Tensor:
    a = _wrap(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _record(data, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    data = a.data.transpose(axes)

    def backward(g):
        if axes is None:
            a._accumulate(g.transpose())
        else:
            a._accumulate(g.transpose(np.argsort(axes)))

    return _record(data, (a,), backward)


def swap_last_axes(a) -> Tensor:
    """Transpose the trailing two axes (batched matrix transpose)."""
    a = _wrap(a)
    data = np.swapaxes(a.data, -1, -2)

    def backward(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    return _record(data, (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad or t._prev:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _record(data, tuple(tensors), backward)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        parts = np.split(g, len(tensors), axis=axis)
        for t, part in zip(tensors, parts):
            if t.requires_grad or t._prev:
                t._accumulate(part.reshape(t.data.shape))

    return _record(data, tuple(tensors), backward)


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (slice, int, type(Ellipsis), type(None))) for p in parts)


def take(a, idx) -> Tensor:
    """Basic and integer-array indexing with scatter-add backward."""
    a = _wrap(a)
    data = a.data[idx]
    basic = _is_basic_index(idx)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g  # basic indexing has no duplicates; += is the fast path
        else:
            np.add.at(full, idx, g)
        a._accumulate(full)

    return _record(data, (a,), backward)


def gather(a, indices, axis: int = -1) -> Tensor:
    """np.take_along_axis with additive scatter on the way back."""
    a = _wrap(a)
    indices = np.asarray(indices)
    data = np.take_along_axis(a.data, indices, axis=axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, indices, g, axis=axis)
        a._accumulate(full)

    return _record(data, (a,), backward)


# -- linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.shape[-1] != b.data.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul mismatch: {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        # promote 1-D operands to row/column matrices so one rule covers all
        ad = a.data[None, :] if a.data.ndim == 1 else a.data
        bd = b.data[:, None] if b.data.ndim == 1 else b.data
        gg = g
        if a.data.ndim == 1:
            gg = np.expand_dims(gg, -2)
        if b.data.ndim == 1:
            gg = np.expand_dims(gg, -1)
        if a.requires_grad or a._prev:
            ga = gg @ np.swapaxes(bd, -1, -2)
            if a.data.ndim == 1:
                ga = ga[..., 0, :].reshape(-1, a.data.shape[0]).sum(axis=0)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad or b._prev:
            gb = np.swapaxes(ad, -1, -2) @ gg
            if b.data.ndim == 1:
                gb = gb[..., 0].reshape(-1, b.data.shape[0]).sum(axis=0)
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _record(data, (a, b), backward)


# -- softmax family ----------------------------------------------------------


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        a._accumulate(data * (g - dot))

    return _record(data, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _wrap(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    soft = np.exp(data)

    def backward(g):
        a._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    return _record(data, (a,), backward)
