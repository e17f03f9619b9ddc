"""Minimal reverse-mode automatic differentiation over numpy arrays.

Builds a tape of (parent, vector-Jacobian product) edges as expressions are
evaluated.  Only nodes on a path from a gradient-requiring leaf keep edges,
so forward passes over constants carry no bookkeeping cost.  Gradients are
accumulated by a single reverse sweep in topological order.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "parameter", "constant", "concat", "sigmoid", "tanh", "relu", "gradients"]


class Tensor:
    """A float64 array plus the local backward edges that produced it."""

    __slots__ = ("value", "parents", "requires")

    def __init__(self, value, parents=(), requires=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self.requires = requires

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def parameter(value) -> Tensor:
    """Leaf tensor that receives a gradient."""
    return Tensor(value, requires=True)


def constant(value) -> Tensor:
    """Leaf tensor excluded from differentiation."""
    return Tensor(value)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, edges) -> Tensor:
    kept = tuple((p, vjp) for p, vjp in edges if p.requires)
    return Tensor(value, kept, requires=bool(kept))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return _node(
        a.value + b.value,
        (
            (a, lambda g: _unbroadcast(g, a.value.shape)),
            (b, lambda g: _unbroadcast(g, b.value.shape)),
        ),
    )


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    return _node(
        a.value * b.value,
        (
            (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
            (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
        ),
    )


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batching semantics on the leading axes."""
    a, b = _lift(a), _lift(b)

    def grad_a(g):
        bt = np.swapaxes(b.value, -1, -2)
        return _unbroadcast(g @ bt, a.value.shape)

    def grad_b(g):
        at = np.swapaxes(a.value, -1, -2)
        return _unbroadcast(at @ g, b.value.shape)

    return _node(a.value @ b.value, ((a, grad_a), (b, grad_b)))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def make_vjp(k):
        lo, hi = bounds[k], bounds[k + 1]

        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        return vjp

    value = np.concatenate([t.value for t in tensors], axis=axis)
    return _node(value, tuple((t, make_vjp(k)) for k, t in enumerate(tensors)))


def sigmoid(a) -> Tensor:
    a = _lift(a)
    # numerically stable on both tails
    out = np.empty_like(a.value)
    pos = a.value >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.value[pos]))
    ez = np.exp(a.value[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _node(out, ((a, lambda g: g * out * (1.0 - out)),))


def tanh(a) -> Tensor:
    a = _lift(a)
    out = np.tanh(a.value)
    return _node(out, ((a, lambda g: g * (1.0 - out * out)),))


def relu(a) -> Tensor:
    a = _lift(a)
    keep = a.value > 0
    return _node(np.where(keep, a.value, 0.0), ((a, lambda g: g * keep),))


def absolute(a) -> Tensor:
    """Elementwise |a| with subgradient 0 at exact zeros."""
    a = _lift(a)
    sign = np.sign(a.value)
    return _node(np.abs(a.value), ((a, lambda g: g * sign),))


def total(a) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    a = _lift(a)
    return _node(
        np.asarray(a.value.sum()),
        ((a, lambda g: np.broadcast_to(g, a.value.shape)),),
    )


def square(a) -> Tensor:
    a = _lift(a)
    return _node(a.value * a.value, ((a, lambda g: g * 2.0 * a.value),))


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    old = a.value.shape
    return _node(a.value.reshape(shape), ((a, lambda g: np.reshape(g, old)),))


def _topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the subgraph that needs gradients."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def gradients(loss: Tensor, leaves: list[Tensor]) -> list[np.ndarray]:
    """Gradient of a scalar loss with respect to each leaf tensor.

    Leaves that the loss does not depend on get zero gradients.
    """
    if loss.value.size != 1:
        raise ValueError("loss must be a scalar")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, vjp in node.parents:
            pg = vjp(g)
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
        if not node.parents and node.requires:
            grads[id(node)] = g
    out = []
    for leaf in leaves:
        g = grads.get(id(leaf))
        out.append(np.zeros_like(leaf.value) if g is None else np.reshape(g, leaf.value.shape))
    return out
