"""A small reverse-mode automatic differentiation engine over numpy arrays.

Each operation returns a :class:`Tensor` that remembers its parents and a
closure propagating the output gradient to them.  The graph is rebuilt on
every forward pass; :func:`backward` walks it once in reverse topological
order.

Per-sample gradients are obtained with :func:`expand_batch`: a parameter is
broadcast to an explicit leading batch axis, so after ``backward`` the
expanded node's ``grad`` holds one gradient per batch element.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

LN_EPS = 1e-5


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=float)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.data

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def transpose(self, *axes):
        return transpose(self, axes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs,
                  _parents=parents if needs else (), _backward=backward if needs else None)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=float, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "add")
    out = None

    def bw():
        _accumulate(a, _unbroadcast(out.grad, a.shape))
        _accumulate(b, _unbroadcast(out.grad, b.shape))

    out = _result(a.data + b.data, (a, b), bw)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "mul")
    out = None

    def bw():
        _accumulate(a, _unbroadcast(out.grad * b.data, a.shape))
        _accumulate(b, _unbroadcast(out.grad * a.data, b.shape))

    out = _result(a.data * b.data, (a, b), bw)
    return out


def neg(a: Tensor) -> Tensor:
    out = None

    def bw():
        _accumulate(a, -out.grad)

    out = _result(-a.data, (a,), bw)
    return out


def relu(a: Tensor) -> Tensor:
    out = None
    pos = a.data > 0

    def bw():
        _accumulate(a, out.grad * pos)

    out = _result(np.where(pos, a.data, 0.0), (a,), bw)
    return out


def exp(a: Tensor) -> Tensor:
    out = None

    def bw():
        _accumulate(a, out.grad * out.data)

    out = _result(np.exp(a.data), (a,), bw)
    return out


def log(a: Tensor) -> Tensor:
    out = None

    def bw():
        _accumulate(a, out.grad / a.data)

    with np.errstate(divide="ignore"):
        out = _result(np.log(a.data), (a,), bw)
    return out


def tanh(a: Tensor) -> Tensor:
    out = None

    def bw():
        _accumulate(a, out.grad * (1.0 - out.data**2))

    out = _result(np.tanh(a.data), (a,), bw)
    return out


# -- linear algebra and shape ops ---------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = None

    def bw():
        g = out.grad
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    out = _result(a.data @ b.data, (a, b), bw)
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = None
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {a.shape} to {shape}") from None

    def bw():
        _accumulate(a, out.grad.reshape(a.shape))

    out = _result(data, (a,), bw)
    return out


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = None

    def bw():
        _accumulate(a, out.grad.transpose(inv))

    out = _result(a.data.transpose(axes), (a,), bw)
    return out


def getitem(a: Tensor, idx) -> Tensor:
    """Basic or advanced indexing (``slice`` in the op list)."""
    out = None

    def bw():
        g = np.zeros_like(a.data)
        np.add.at(g, idx, out.grad)
        _accumulate(a, g)

    out = _result(a.data[idx], (a,), bw)
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ValueError(f"concat: {exc}") from None
    out = None

    def bw():
        pieces = np.split(out.grad, np.cumsum(sizes)[:-1], axis=axis)
        for t, g in zip(tensors, pieces):
            _accumulate(t, g)

    out = _result(data, tuple(tensors), bw)
    return out


def tsum(a: Tensor, axis=None) -> Tensor:
    out = None

    def bw():
        g = out.grad
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))

    out = _result(a.data.sum(axis=axis), (a,), bw)
    return out


def expand_batch(a: Tensor, batch: int) -> Tensor:
    """Broadcast ``a`` to shape ``(batch, *a.shape)`` as a real graph node."""
    out = None

    def bw():
        _accumulate(a, out.grad.sum(axis=0))

    out = _result(np.broadcast_to(a.data, (batch,) + a.shape), (a,), bw)
    return out


def embedding(table: Tensor, idx: np.ndarray) -> Tensor:
    """Rows of ``table`` selected by integer array ``idx``; output ``idx.shape + (d,)``.

    A batched table of shape ``(B, V, d)`` is indexed per batch element with
    ``idx`` of shape ``(B, ...)``.
    """
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[-2]):
        raise ValueError("embedding: index out of range")
    out = None
    if table.ndim == 2:
        data = table.data[idx]
    else:
        bsel = np.arange(table.shape[0]).reshape((-1,) + (1,) * (idx.ndim - 1))
        data = table.data[bsel, idx]

    def bw():
        g = np.zeros_like(table.data)
        if table.ndim == 2:
            np.add.at(g, idx, out.grad)
        else:
            np.add.at(g, (bsel, idx), out.grad)
        _accumulate(table, g)

    out = _result(data, (table,), bw)
    return out


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    out = None

    def bw():
        _accumulate(a, np.where(mask, 0.0, out.grad))

    out = _result(np.where(mask, value, a.data), (a,), bw)
    return out


def take_last(a: Tensor, idx: np.ndarray) -> Tensor:
    """``a[..., idx[...]]``: pick one entry of the last axis per leading index."""
    idx = np.asarray(idx)
    out = None
    data = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def bw():
        g = np.zeros_like(a.data)
        np.put_along_axis(g, idx[..., None], out.grad[..., None], axis=-1)
        _accumulate(a, g)

    out = _result(data, (a,), bw)
    return out


# -- normalizations ---------------------------------------------------------------

def softmax(a: Tensor) -> Tensor:
    out = None
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def bw():
        g = out.grad
        _accumulate(a, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    out = _result(p, (a,), bw)
    return out


def log_softmax(a: Tensor) -> Tensor:
    out = None
    m = a.data.max(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore"):
        shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = shifted - lse
    p = np.exp(data)

    def bw():
        g = np.where(np.isneginf(data), 0.0, out.grad)
        _accumulate(a, g - p * g.sum(axis=-1, keepdims=True))

    out = _result(data, (a,), bw)
    return out


def layer_norm(x: Tensor, gain: Tensor, offset: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize over the last axis, then apply learnable ``gain`` and ``offset``."""
    d = x.shape[-1]
    if gain.shape[-1] != d or offset.shape[-1] != d:
        raise ValueError(f"layer_norm: parameter width does not match {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = None
    g_b = gain.data
    if gain.ndim > 1:
        # batched parameters (B, d) broadcast over the token axes of x
        g_b = gain.data.reshape(gain.shape[:1] + (1,) * (x.ndim - 2) + (d,))
    o_b = offset.data if offset.ndim == 1 else offset.data.reshape(g_b.shape)

    def bw():
        g = out.grad
        if gain.requires_grad:
            gg = g * xhat
            _accumulate(gain, _reduce_param(gg, gain.shape))
        if offset.requires_grad:
            _accumulate(offset, _reduce_param(g, offset.shape))
        if x.requires_grad:
            gx = g * g_b
            _accumulate(x, inv * (gx - gx.mean(axis=-1, keepdims=True)
                                  - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))

    out = _result(xhat * g_b + o_b, (x, gain, offset), bw)
    return out


def _reduce_param(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if len(shape) == 1:
        return g.reshape(-1, shape[0]).sum(axis=0)
    return g.reshape(shape[0], -1, shape[-1]).sum(axis=1)


# -- driver ---------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def backward(root: Tensor) -> None:
    """Populate ``.grad`` on every node that depends on a parameter."""
    if root.data.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    root.grad = np.ones_like(root.data)
    for node in reversed(_topo_order(root)):
        if node._backward is not None and node.grad is not None:
            node._backward()


def param(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=float), requires_grad=True, name=name)
