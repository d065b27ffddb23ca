"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every op returns a :class:`Tensor` that remembers its parents and a closure
propagating the output gradient to them.  :meth:`Tensor.backward` walks the
graph in reverse topological order.  Only the ops the counting network needs
are provided; all arithmetic is float64.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data) if grad is None else grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=False)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return Tensor(a.data + b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor(a.data * b.data, (a, b), back)


def neg(a: Tensor) -> Tensor:
    return Tensor(-a.data, (a,), lambda g: a._accumulate(-g))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor(a.data @ b.data, (a, b), back)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` as one node."""

    def back(g):
        if x.requires_grad:
            x._accumulate(g @ w.data.T)
        w._accumulate(x.data.T @ g)
        b._accumulate(g.sum(axis=0))

    return Tensor(x.data @ w.data + b.data, (x, w, b), back)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor(a.data * mask, (a,), lambda g: a._accumulate(g * mask))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor(out, (a,), lambda g: a._accumulate(g * out * (1.0 - out)))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: a._accumulate(g * out))


def log(a: Tensor) -> Tensor:
    return Tensor(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))


def square(a: Tensor) -> Tensor:
    return Tensor(a.data * a.data, (a,), lambda g: a._accumulate(2.0 * g * a.data))


def elu_plus_one(a: Tensor, variant: str = "exp") -> Tensor:
    """``exp(x)`` for ``x <= 0`` and ``x + 1`` otherwise.

    ``variant="printed"`` uses ``exp(-x)`` on the non-positive branch instead.
    """
    x = a.data
    pos = x > 0
    if variant == "exp":
        e = np.exp(np.minimum(x, 0.0))
        out = np.where(pos, x + 1.0, e)
        dx = np.where(pos, 1.0, e)
    elif variant == "printed":
        e = np.exp(-np.minimum(x, 0.0))
        out = np.where(pos, x + 1.0, e)
        dx = np.where(pos, 1.0, -e)
    else:
        raise ValueError(f"unknown ELU+1 variant {variant!r}")
    return Tensor(out, (a,), lambda g: a._accumulate(g * dx))


def total(a: Tensor) -> Tensor:
    return Tensor(a.data.sum(), (a,), lambda g: a._accumulate(np.broadcast_to(g, a.shape)))


def mean(a: Tensor) -> Tensor:
    k = a.data.size
    return Tensor(a.data.mean(), (a,), lambda g: a._accumulate(np.broadcast_to(g / k, a.shape)))


def column(a: Tensor, j: int) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        full[:, j] = g
        a._accumulate(full)

    return Tensor(a.data[:, j], (a,), back)


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        for p, gp in zip(parts, np.split(g, cuts, axis=axis)):
            if p.requires_grad:
                p._accumulate(gp)

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), back)


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """``a[index]``; the gradient scatters back with summation."""

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        a._accumulate(full)

    return Tensor(a.data[index], (a,), back)


def permute_rows(a: Tensor, perm: np.ndarray, inverse: np.ndarray) -> Tensor:
    """``a[perm]`` for a permutation, whose gradient is a gather by ``inverse``."""
    return Tensor(a.data[perm], (a,), lambda g: a._accumulate(g[inverse]))


def spmm(mat: sp.csr_matrix, a: Tensor, mat_t: sp.csr_matrix | None = None) -> Tensor:
    """Sparse-dense product ``mat @ a``; ``mat`` is a constant."""
    mt = mat.T.tocsr() if mat_t is None else mat_t
    return Tensor(mat @ a.data, (a,), lambda g: a._accumulate(mt @ g))


def broadcast_rows(v: Tensor, rows: int) -> Tensor:
    """Stack ``rows`` copies of a 1-D tensor."""
    return Tensor(
        np.broadcast_to(v.data, (rows, v.shape[0])).copy(), (v,), lambda g: v._accumulate(g.sum(axis=0))
    )


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, groups: int = 1, eps: float = 1e-3) -> Tensor:
    """Normalise each of ``groups`` contiguous feature blocks, then scale and shift."""
    rows, width = x.shape
    k = width // groups
    xg = x.data.reshape(rows, groups, k)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=2, keepdims=True) + eps)
    xhat = (xc * inv).reshape(rows, width)

    def back(g):
        gain._accumulate((g * xhat).sum(axis=0))
        bias._accumulate(g.sum(axis=0))
        if x.requires_grad:
            gh = (g * gain.data).reshape(rows, groups, k)
            xh = xhat.reshape(rows, groups, k)
            gx = inv * (gh - gh.mean(axis=2, keepdims=True) - xh * (gh * xh).mean(axis=2, keepdims=True))
            x._accumulate(gx.reshape(rows, width))

    return Tensor(xhat * gain.data + bias.data, (x, gain, bias), back)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        a._accumulate(full)

    return Tensor(a.data[:, start:stop], (a,), back)
