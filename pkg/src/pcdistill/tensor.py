"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy float64 array and, when any input of an operation
has ``requires_grad=True``, records the operation so that ``backward()`` on a
scalar result can replay the graph once in reverse topological order.
Gradients are accumulated into the ``grad`` buffer of every gradient-tracking
*leaf* (a tensor created directly rather than by an operation); the caller is
responsible for zeroing them between optimizer steps, so repeated backward
calls add up.

Everything is float64 and deterministic: identical inputs produce
bit-identical outputs.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .errors import DegenerateGroupError, ParameterError, ShapeError


class Tensor:
    """Dense float64 array, optionally tracking gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    # keep numpy from hijacking arithmetic when the left operand is an ndarray
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable] = None

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
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def _add_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        backward(self)

    # reductions / views ------------------------------------------------
    def sum(self, axis: Optional[int] = None) -> "Tensor":
        return tsum(self, axis=axis)

    def mean(self) -> "Tensor":
        return mean(self)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    # operators ----------------------------------------------------------
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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _op(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _check_elementwise(a: Tensor, b: Tensor, opname: str) -> None:
    # identical shapes, or either side a scalar; no general broadcasting
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} do not match")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a broadcast gradient back onto a scalar operand."""
    if np.shape(g) == shape:
        return g
    return np.asarray(np.sum(g), dtype=np.float64).reshape(shape)


# -- elementwise arithmetic ----------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_elementwise(a, b, "add")

    def bw(g):
        return (_reduce_to(g, a.shape), _reduce_to(g, b.shape))

    return _op(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_elementwise(a, b, "sub")

    def bw(g):
        return (_reduce_to(g, a.shape), _reduce_to(-g, b.shape))

    return _op(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_elementwise(a, b, "mul")

    def bw(g):
        return (_reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape))

    return _op(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _check_elementwise(a, b, "div")

    def bw(g):
        ga = _reduce_to(g / b.data, a.shape)
        gb = _reduce_to(-g * a.data / (b.data * b.data), b.shape)
        return (ga, gb)

    return _op(a.data / b.data, (a, b), bw)


def neg(a) -> Tensor:
    a = _coerce(a)

    def bw(g):
        return (-g,)

    return _op(-a.data, (a,), bw)


# -- linear algebra --------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not chain")

    def bw(g):
        return (g @ b.data.T, a.data.T @ g)

    return _op(a.data @ b.data, (a, b), bw)


def affine(x, w, b) -> Tensor:
    """Fused ``x @ w + b`` for a [B, D] batch, [D, K] weight, [K] bias."""
    x, w, b = _coerce(x), _coerce(w), _coerce(b)
    if (
        x.ndim != 2
        or w.ndim != 2
        or b.ndim != 1
        or x.shape[1] != w.shape[0]
        or b.shape[0] != w.shape[1]
    ):
        raise ShapeError(
            f"affine: x{x.shape} w{w.shape} b{b.shape} are incompatible"
        )

    def bw(g):
        return (g @ w.data.T, x.data.T @ g, g.sum(axis=0))

    return _op(x.data @ w.data + b.data, (x, w, b), bw)


# -- nonlinearities ---------------------------------------------------------

def relu(x) -> Tensor:
    x = _coerce(x)
    pos = x.data > 0

    def bw(g):
        return (np.where(pos, g, 0.0),)

    return _op(np.where(pos, x.data, 0.0), (x,), bw)


def log(x) -> Tensor:
    """Elementwise natural log; the caller guarantees positive inputs.

    An underflowed 0 produces -inf rather than a warning so that a diverging
    loss is caught by the training loop's finiteness check.
    """
    x = _coerce(x)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (g / x.data,)

    with np.errstate(divide="ignore"):
        return _op(np.log(x.data), (x,), bw)


def sqrt(x) -> Tensor:
    x = _coerce(x)
    out_data = np.sqrt(x.data)

    def bw(g):
        return (g / (2.0 * out_data),)

    return _op(out_data, (x,), bw)


def masked_log(x, mask) -> Tensor:
    """log(x) on masked-in entries, exactly 0 elsewhere.

    Gradient flows only through masked-in entries, which must be positive.
    """
    x = _coerce(x)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"masked_log: mask {mask.shape} vs data {x.shape}")
    safe = np.where(mask, x.data, 1.0)
    # a masked-in entry can underflow to exactly 0 when logits blow up; the
    # resulting -inf propagates to the loss and trips divergence detection
    with np.errstate(divide="ignore"):
        out_data = np.where(mask, np.log(safe), 0.0)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(mask, g / safe, 0.0),)

    return _op(out_data, (x,), bw)


def masked_softmax_temp(z, mask, tau) -> Tensor:
    """Temperature softmax restricted to masked-in entries of each row.

    Masked-out entries are exactly 0 in the output and receive no gradient.
    Rows are stabilized by subtracting the max over their masked-in entries
    before exponentiation, so no non-finite value is ever exponentiated.

    Accepts a single row or a [B, C] batch; ``mask`` must match the shape and
    have at least one True per row.
    """
    z = _coerce(z)
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0.0:
        raise ParameterError(f"temperature must be a positive finite number, got {tau}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != z.shape:
        raise ShapeError(f"masked_softmax_temp: mask {mask.shape} vs logits {z.shape}")
    if not mask.any(axis=-1).all():
        raise DegenerateGroupError("masked_softmax_temp: a row masks out every class")

    zmax = z.data.max(axis=-1, where=mask, initial=float(z.data.min()), keepdims=True)
    e = np.where(mask, np.exp(np.where(mask, z.data - zmax, 0.0) / tau), 0.0)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        return ((out_data * (g - dot)) / tau,)

    return _op(out_data, (z,), bw)


# -- reductions and indexing -------------------------------------------------

def tsum(x, axis: Optional[int] = None) -> Tensor:
    x = _coerce(x)
    if axis is None:
        def bw(g):
            return (np.broadcast_to(np.asarray(g), x.shape),)

        return _op(np.asarray(x.data.sum()), (x,), bw)

    def bw_axis(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape),)

    return _op(x.data.sum(axis=axis), (x,), bw_axis)


def mean(x) -> Tensor:
    x = _coerce(x)
    n = x.data.size

    def bw(g):
        return (np.broadcast_to(np.asarray(g) / n, x.shape),)

    return _op(np.asarray(x.data.mean()), (x,), bw)


def reshape(x, shape) -> Tensor:
    x = _coerce(x)
    orig = x.shape

    def bw(g):
        return (np.asarray(g).reshape(orig),)

    return _op(x.data.reshape(shape), (x,), bw)


def take_per_row(x, idx) -> Tensor:
    """Pick one entry per row of a 2-D tensor: ``out[b] = x[b, idx[b]]``."""
    x = _coerce(x)
    idx = np.asarray(idx, dtype=np.int64)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise ShapeError(f"take_per_row: data {x.shape} vs indices {idx.shape}")
    rows = np.arange(x.shape[0])

    def bw(g):
        buf = np.zeros(x.shape, dtype=np.float64)
        buf[rows, idx] = g
        return (buf,)

    return _op(x.data[rows, idx], (x,), bw)


# -- backward pass -----------------------------------------------------------

def topo_order(root: Tensor) -> list[Tensor]:
    """Gradient-relevant nodes of the graph, parents before children."""
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
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``grad`` of every tracked leaf."""
    if root.data.size != 1:
        raise ParameterError(f"backward requires a scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(topo_order(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node._add_grad(g)
            continue
        for parent, gp in zip(node._parents, node._backward(g)):
            if gp is None or not parent.requires_grad:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + gp
            else:
                grads[pid] = gp
