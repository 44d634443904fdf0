"""Reverse-mode autodiff on 64-bit numpy arrays.

Dynamic tape: every op stores its parent tensors and a backward closure on
the output. The monotonically increasing node_id doubles as a topological
order, because inputs are always created before the ops that consume them.
Tensors are immutable after creation except for the grad buffer; backward
may be called repeatedly on the same graph and accumulates into .grad until
zero_grads is called.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ShapeError
from .rng import SeededRng

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

_node_counter = itertools.count()


class Tensor:
    """N-d float64 array participating in a reverse-mode graph."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node_id = next(_node_counter)
        self._parents: tuple[Tensor, ...] = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- method sugar ------------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def astensor(x) -> Tensor:
    """Promote a scalar/array to a constant Tensor; pass Tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    """Record the op only if some parent requires grad."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the parent's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    a = astensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def pow_scalar(a: Tensor, p: float) -> Tensor:
    a = astensor(a)
    out = a.data ** p

    def backward(g):
        return (g * p * a.data ** (p - 1),)

    return _make(out, (a,), backward)


# -- matmul ------------------------------------------------------------------

def _swap_last2(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    """Batched matrix product [..,M,K] @ [..,K,P] -> [..,M,P]."""
    a, b = astensor(a), astensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims mismatch: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul batch dims not broadcastable: {a.shape} @ {b.shape}") from e

    def backward(g):
        ga = _unbroadcast(np.matmul(g, _swap_last2(b.data)), a.shape)
        gb = _unbroadcast(np.matmul(_swap_last2(a.data), g), b.shape)
        return ga, gb

    return _make(out, (a, b), backward)


# -- shape ops ----------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    a = astensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.shape),)

    return _make(out, (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    a = astensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = a.data.transpose(axes)

    def backward(g):
        return (g.transpose(inv),)

    return _make(out, (a,), backward)


def getitem(a: Tensor, idx) -> Tensor:
    a = astensor(a)
    out = a.data[idx]

    def backward(g):
        gp = np.zeros_like(a.data)
        np.add.at(gp, idx, g)
        return (gp,)

    return _make(np.array(out, dtype=np.float64), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, tuple(tensors), backward)


# -- reductions ---------------------------------------------------------------

def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = astensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = astensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


# -- elementwise nonlinearities -----------------------------------------------

def texp(a: Tensor) -> Tensor:
    a = astensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def tlog(a: Tensor) -> Tensor:
    a = astensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def tsqrt(a: Tensor) -> Tensor:
    a = astensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def tabs(a: Tensor) -> Tensor:
    a = astensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def tanh(a: Tensor) -> Tensor:
    a = astensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a: Tensor) -> Tensor:
    a = astensor(a)
    out = np.maximum(a.data, 0.0)
    return _make(out, (a,), lambda g: (g * (a.data > 0.0),))


def gelu(a: Tensor) -> Tensor:
    """Exact erf-based GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    a = astensor(a)
    e = erf(a.data * _INV_SQRT2)
    out = 0.5 * a.data * (1.0 + e)

    def backward(g):
        pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT2PI
        return (g * (0.5 * (1.0 + e) + a.data * pdf),)

    return _make(out, (a,), backward)


_POINTWISE = {"relu": relu, "gelu": gelu, "tanh": tanh}


def pointwise(a: Tensor, kind: str) -> Tensor:
    """Elementwise activation dispatch; unknown kind is a config error."""
    try:
        fn = _POINTWISE[kind]
    except KeyError:
        raise ConfigError(f"unknown pointwise kind '{kind}' (expected one of {sorted(_POINTWISE)})")
    return fn(a)


# -- fused structured ops -------------------------------------------------------

def softmax_lastdim(a: Tensor) -> Tensor:
    """Max-subtracted softmax along the last dim; rows sum to 1."""
    a = astensor(a)
    if a.shape[-1] < 1:
        raise ShapeError(f"softmax needs last dim >= 1, got {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize to zero mean / unit variance along the last dim, then affine."""
    a, gain, bias = astensor(a), astensor(gain), astensor(bias)
    c = a.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"layer_norm gain/bias must be ({c},), got {gain.shape}/{bias.shape}")
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_s = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_s
    out = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        ga = inv_s * (dxhat - m1 - xhat * m2)
        reduce_axes = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=reduce_axes)
        gbias = g.sum(axis=reduce_axes)
        return ga, ggain, gbias

    return _make(out, (a, gain, bias), backward)


def norm_lastdim(a: Tensor, keepdims: bool = False) -> Tensor:
    """Euclidean norm along the last dim. Gradient is 0 at exactly-zero rows."""
    a = astensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=keepdims))

    def backward(g):
        nk = n if keepdims else n[..., None]
        gk = g if keepdims else g[..., None]
        return (gk * a.data / np.maximum(nk, 1e-300),)

    return _make(n, (a,), backward)


def dropout(a: Tensor, p: float, rng: SeededRng | None, training: bool) -> Tensor:
    """Zero elements w.p. p and rescale survivors by 1/(1-p); identity in eval."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout p must be in [0, 1), got {p}")
    a = astensor(a)
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ConfigError("dropout in training mode requires an rng")
    scale = (rng.random(a.shape) >= p) / (1.0 - p)
    return _make(a.data * scale, (a,), lambda g: (g * scale,))


# -- backward pass ---------------------------------------------------------------

def _reachable(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    nodes: list[Tensor] = []
    stack = [root]
    while stack:
        t = stack.pop()
        if id(t) in seen:
            continue
        seen.add(id(t))
        nodes.append(t)
        stack.extend(t._parents)
    nodes.sort(key=lambda t: t.node_id, reverse=True)
    return nodes


def backward(loss: Tensor) -> None:
    """Accumulate dloss/dt into t.grad for every requires_grad tensor in the graph."""
    if loss.data.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    flow: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in _reachable(loss):
        g = flow.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = flow.get(id(parent))
            flow[id(parent)] = pg if prev is None else prev + pg


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None
