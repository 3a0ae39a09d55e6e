"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every value flowing through a differentiable computation is a
:class:`Tensor`. Primitives record a closure mapping the output adjoint to
the adjoints of their inputs; :meth:`Tensor.backward` replays them in
reverse topological order. Numpy ufuncs refuse Tensors
(``__array_ufunc__ = None``), so an unsupported operation raises at
construction time instead of silently dropping a gradient.
"""

from __future__ import annotations

import os
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

DEBUG = bool(os.environ.get("GRAPHUIL_DEBUG"))


class Tensor:
    __array_ufunc__ = None
    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, value, parents: tuple = (), backward: Callable | None = None,
                 requires_grad: bool = False):
        value = np.asarray(value)
        if value.dtype != np.longdouble:    # extended precision is kept for gradient checks
            value = value.astype(np.float64, copy=False)
        if DEBUG and not np.all(np.isfinite(value)):
            raise FloatingPointError("non-finite value produced")
        self.value = value
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() needs a scalar output")
        order, seen = [], set()
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
        grads = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __neg__(self): return mul(self, -1.0)
    def __getitem__(self, idx): return take(self, idx)


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def leaf(x) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return Tensor(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return Tensor(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return Tensor(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.shape) if a.requires_grad else None,
                             _unbroadcast(g * a.value, b.shape) if b.requires_grad else None))


def relu(a) -> Tensor:
    a = tensor(a)
    pos = a.value > 0
    return Tensor(np.maximum(a.value, 0.0), (a,), lambda g: (g * pos,))


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a) -> Tensor:
    a = tensor(a)
    s = _sigmoid(np.atleast_1d(a.value)).reshape(a.shape)
    return Tensor(s, (a,), lambda g: (g * s * (1.0 - s),))


def softplus(a) -> Tensor:
    """``log(1 + exp(a))``; used for logistic cross-entropy."""
    a = tensor(a)
    s = _sigmoid(np.atleast_1d(a.value)).reshape(a.shape)
    return Tensor(np.logaddexp(0.0, a.value), (a,), lambda g: (g * s,))


# -- linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    return Tensor(a.value @ b.value, (a, b),
                  lambda g: (g @ b.value.T if a.requires_grad else None,
                             a.value.T @ g if b.requires_grad else None))


def spmm(m: sp.spmatrix, x) -> Tensor:
    """Constant sparse matrix times a dense tensor."""
    x = tensor(x)
    if m.shape[1] != x.shape[0]:
        raise ValueError(f"spmm shape mismatch {m.shape} @ {x.shape}")
    mt = m.T.tocsr()
    return Tensor(m @ x.value, (x,), lambda g: (mt @ g,))


def concat_cols(parts: Sequence) -> Tensor:
    parts = [tensor(p) for p in parts]
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ValueError("concat_cols: row counts differ")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def back(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return Tensor(np.concatenate([p.value for p in parts], axis=1), tuple(parts), back)


def take(a, idx) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate."""
    a = tensor(a)

    def back(g):
        if isinstance(idx, np.ndarray) and idx.ndim == 1 and idx.dtype.kind in "iu":
            return (_scatter_add(idx, g, a.shape),)
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor(a.value[idx], (a,), back)


def _scatter_add(idx: np.ndarray, g: np.ndarray, shape) -> np.ndarray:
    # much faster than np.add.at for row gathers
    n = shape[0]
    if g.ndim == 1:
        return np.bincount(idx, weights=g, minlength=n)
    m = sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(n, len(idx)))
    return np.asarray(m @ g.reshape(len(idx), -1)).reshape(shape)


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


# -- reductions ------------------------------------------------------------------

def sum(a, axis=None) -> Tensor:  # noqa: A001
    a = tensor(a)
    if axis is None:
        return Tensor(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor(a.value.sum(axis=axis), (a,), back)


def mean(a) -> Tensor:
    a = tensor(a)
    return mul(sum(a), 1.0 / a.value.size)


def sq_norm(a) -> Tensor:
    """Sum of squares of all entries."""
    a = tensor(a)
    return Tensor(np.sum(a.value * a.value), (a,), lambda g: (2.0 * g * a.value,))


def row_dot(a, b) -> Tensor:
    """Row-wise inner products of two equal-shape matrices."""
    return sum(mul(a, b), axis=1)


def masked_sq_error(pred, target, mask=None) -> Tensor:
    """``sum(mask * (target - pred)**2)`` with constant target and mask."""
    d = sub(target, pred)
    if mask is not None:
        d = mul(d, np.asarray(mask, dtype=np.float64))
    return sq_norm(d)


# -- graph-structured primitives ------------------------------------------------

def row_softmax(logits, rows: np.ndarray, n_rows: int) -> Tensor:
    """Softmax of per-entry ``logits`` grouped by ``rows``.

    ``logits[e]`` is the score of a supported entry in row ``rows[e]``;
    unsupported entries are simply absent and therefore exactly zero.
    Dense masked form: see :func:`dense_row_softmax`.
    """
    z = tensor(logits)
    rows = np.asarray(rows)
    mx = np.full(n_rows, -np.inf, dtype=z.value.dtype)
    np.maximum.at(mx, rows, z.value)
    e = np.exp(z.value - mx[rows])
    denom = _segment_sum(rows, e, n_rows)
    s = e / denom[rows]

    def back(g):
        inner = _segment_sum(rows, g * s, n_rows)
        return (s * (g - inner[rows]),)

    return Tensor(s, (z,), back)


def _segment_sum(rows, values, n):
    if values.dtype == np.float64:
        return np.bincount(rows, weights=values, minlength=n)
    out = np.zeros(n, dtype=values.dtype)   # bincount would round to float64
    np.add.at(out, rows, values)
    return out


def dense_row_softmax(logits, mask) -> Tensor:
    """Row softmax of a dense matrix restricted to ``mask`` (bool, same shape).
    Rows with empty support come out all zero."""
    z = tensor(logits)
    mask = np.asarray(mask, dtype=bool)
    r, c = np.nonzero(mask)
    s = row_softmax(take(z, (r, c)), r, z.shape[0])
    out = np.zeros(z.shape)
    out[r, c] = s.value

    def back(g):
        return (g[r, c],)

    return Tensor(out, (s,), back)


def edge_aggregate(weights, rows: np.ndarray, cols: np.ndarray, x, n_rows: int) -> Tensor:
    """``out[i] = sum_e weights[e] * x[cols[e]]`` over entries with ``rows[e] == i``,
    i.e. a sparse matrix with differentiable values applied to ``x``."""
    w, x = tensor(weights), tensor(x)
    m = sp.csr_matrix((w.value, (rows, cols)), shape=(n_rows, x.shape[0]))

    def back(g):
        gw = np.einsum("ij,ij->i", g[rows], x.value[cols]) if w.requires_grad else None
        gx = m.T @ g if x.requires_grad else None
        return (gw, gx)

    return Tensor(m @ x.value, (w, x), back)


# -- driver ------------------------------------------------------------------------

def value_and_grad(fn: Callable[[Mapping[str, Tensor]], Tensor], params: Mapping[str, np.ndarray],
                   wrt: set[str] | None = None):
    """Evaluate ``fn`` on leaf tensors built from ``params`` and return
    ``(value, grads, out)`` where ``out`` is the scalar Tensor itself."""
    leaves = {k: (leaf(v) if wrt is None or k in wrt else Tensor(v)) for k, v in params.items()}
    out = fn(leaves)
    if not isinstance(out, Tensor):
        raise TypeError("loss function must return a Tensor")
    out.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
             for k, t in leaves.items() if wrt is None or k in wrt}
    return float(out.value), grads, out


def grad(fn, params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Gradient of a scalar function of named parameter blocks."""
    return value_and_grad(fn, params)[1]
