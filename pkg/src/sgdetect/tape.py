"""A minimal reverse-mode autodiff tape over dense numpy arrays.

Only the operations the graph auto-encoder and the classifier need are
provided. Constant operands (normalized adjacency, index arrays) are plain
numpy or scipy.sparse objects; anything carrying a gradient is a ``Var``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn")

    def __init__(self, value, parents=(), backward_fn=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def matmul(a: Var, b: Var) -> Var:
    def back(g):
        return (g @ b.value.T, a.value.T @ g)

    return Var(a.value @ b.value, (a, b), back)


def const_matmul(m, a: Var) -> Var:
    """``m @ a`` for a constant dense or sparse ``m``."""
    mt = m.T

    def back(g):
        return (np.asarray(mt @ g),)

    out = m @ a.value
    return Var(np.asarray(out), (a,), back)


def add(a: Var, b: Var) -> Var:
    def back(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return Var(a.value + b.value, (a, b), back)


def mul(a: Var, b: Var) -> Var:
    def back(g):
        return (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape))

    return Var(a.value * b.value, (a, b), back)


def scale(a: Var, c: float) -> Var:
    return Var(a.value * c, (a,), lambda g: (g * c,))


def relu(a: Var) -> Var:
    mask = a.value > 0
    return Var(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Var) -> Var:
    s = 1.0 / (1.0 + np.exp(-a.value))
    return Var(s, (a,), lambda g: (g * s * (1.0 - s),))


def softmax_rows(a: Var) -> Var:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def back(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return Var(s, (a,), back)


def clip(a: Var, lo: float, hi: float) -> Var:
    inside = (a.value >= lo) & (a.value <= hi)
    return Var(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def log(a: Var) -> Var:
    return Var(np.log(a.value), (a,), lambda g: (g / a.value,))


def one_minus(a: Var) -> Var:
    return Var(1.0 - a.value, (a,), lambda g: (-g,))


def rows(a: Var, idx: np.ndarray) -> Var:
    """Gather rows ``a[idx]``."""
    n = a.shape[0]

    def back(g):
        out = np.zeros((n,) + g.shape[1:])
        np.add.at(out, idx, g)
        return (out,)

    return Var(a.value[idx], (a,), back)


def mean(a: Var) -> Var:
    size = a.value.size
    if size == 0:
        return Var(0.0, (a,), lambda g: (np.zeros(a.shape),))
    return Var(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / size),))


def total(a: Var) -> Var:
    return Var(a.value.sum(), (a,), lambda g: (np.full(a.shape, g),))


def square(a: Var) -> Var:
    return Var(a.value**2, (a,), lambda g: (2.0 * a.value * g,))


def log_softmax_rows(a: Var) -> Var:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    s = np.exp(out)

    def back(g):
        return (g - s * g.sum(axis=1, keepdims=True),)

    return Var(out, (a,), back)


def backward(loss: Var) -> None:
    """Accumulate d(loss)/d(var) into ``.grad`` of every var on the tape."""
    order: list[Var] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            parent.grad = g if parent.grad is None else parent.grad + g


def is_sparse(m) -> bool:
    return sp.issparse(m)
