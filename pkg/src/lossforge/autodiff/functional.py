"""Reverse-mode differentiation over recorded graphs, including second order."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, UnknownLeaf
from .tensor import Tensor, add, as_tensor, dot, no_record, recording_into


class GradBundle(dict):
    """Gradients keyed by leaf tensor (identity)."""

    def __getitem__(self, leaf):
        try:
            return super().__getitem__(leaf)
        except KeyError:
            raise UnknownLeaf(f"no gradient recorded for leaf {leaf!r}") from None

    def arrays(self):
        return {k: v.data for k, v in self.items()}


class Tape:
    """Topologically ordered record of the ops feeding ``root``.

    ``nodes`` holds ops recorded while the tape was active (see
    :func:`evaluate`); a tape built from an existing root recovers its
    order by depth-first search instead.
    """

    def __init__(self, root=None):
        self.nodes = []
        self.root = root

    @property
    def value(self):
        return float(self.root.data)

    def order(self):
        return _topo_order(self.root)

    def grad(self, leaves, create_graph=False, allow_unused=False):
        return grad(self.root, leaves, create_graph=create_graph, allow_unused=allow_unused)


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node.parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def evaluate(fn, *leaves):
    """Run ``fn(*leaves)`` and return ``(value, tape)``.

    ``fn`` must return a scalar Tensor.  Ops created while it runs are appended
    to ``tape.nodes`` in execution order, and a non-finite intermediate raises
    :class:`NumericalError` carrying the op's position on the tape.
    """
    tape = Tape()
    with recording_into(tape):
        root = fn(*leaves)
    root = as_tensor(root)
    if root.size != 1:
        raise ShapeError(f"expression must be scalar, got shape {root.shape}")
    tape.root = root
    return float(root.data), tape


def grad(root, leaves, create_graph=False, allow_unused=False):
    """Gradients of scalar ``root`` w.r.t. each leaf, as a :class:`GradBundle`.

    With ``create_graph=True`` the backward pass is itself recorded, so the
    returned gradients can be differentiated again.
    """
    root = as_tensor(root)
    if root.size != 1:
        raise ShapeError(f"grad needs a scalar root, got shape {root.shape}")
    single = isinstance(leaves, Tensor)
    if single:
        leaves = [leaves]
    order = _topo_order(root) if root.requires_grad else []
    on_tape = {id(n) for n in order}
    for leaf in leaves:
        if id(leaf) not in on_tape and not allow_unused:
            raise UnknownLeaf(f"leaf {leaf.name or leaf!r} is not on the tape")

    grads = {id(root): Tensor(np.ones_like(root.data))}
    if create_graph:
        _backward(order, grads)
    else:
        with no_record():
            _backward(order, grads)

    bundle = GradBundle()
    for leaf in leaves:
        g = grads.get(id(leaf))
        if g is None:
            g = Tensor(np.zeros_like(leaf.data))
        bundle[leaf] = g
    return bundle


def _backward(order, grads):
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node.vjp is None:
            continue
        pgs = node.vjp(g)
        for parent, pg in zip(node.parents, pgs):
            if pg is None or not parent.requires_grad:
                continue
            prev = grads.get(id(parent))
            grads[id(parent)] = pg if prev is None else add(prev, pg)


def _leaf(x):
    if isinstance(x, Tensor):
        return Tensor(x.data, requires_grad=True)
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


class SecondOrder:
    """First-order graph of ``fn(theta[, alpha])`` kept alive for repeated
    Hessian-vector and mixed-partial products.

    Building the graph once and reusing it across Neumann iterations avoids
    re-running the forward pass for every product.
    """

    def __init__(self, fn, theta, alpha=None):
        self.theta = _leaf(theta)
        self.alpha = None if alpha is None else _leaf(alpha)
        args = (self.theta,) if self.alpha is None else (self.theta, self.alpha)
        self.value = fn(*args)
        self.grad_theta = grad(self.value, self.theta, create_graph=True)[self.theta]

    def _inner(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != self.theta.shape:
            raise ShapeError(f"vector shape {v.shape} does not match theta {self.theta.shape}")
        return dot(self.grad_theta, Tensor(v))

    def hvp(self, v):
        s = self._inner(v)
        return grad(s, self.theta, allow_unused=True)[self.theta].data

    def mixed_vjp(self, v):
        if self.alpha is None:
            raise ValueError("mixed_vjp needs an alpha leaf")
        s = self._inner(v)
        return grad(s, self.alpha, allow_unused=True)[self.alpha].data


def hvp(fn, theta, v):
    """Hessian of ``fn`` at ``theta`` applied to ``v`` (double backward)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != np.shape(as_tensor(theta).data):
        raise ShapeError(f"v shape {v.shape} does not match theta shape {np.shape(theta)}")
    return SecondOrder(fn, theta).hvp(v)


def mixed_vjp(fn, theta, alpha, v):
    """``v^T d^2 fn / (d theta d alpha)``, shaped like ``alpha``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != np.shape(as_tensor(theta).data):
        raise ShapeError(f"v shape {v.shape} does not match theta shape {np.shape(theta)}")
    return SecondOrder(fn, theta, alpha).mixed_vjp(v)


def value_and_grad(fn, *args):
    """Value of ``fn(*args)`` and its gradients w.r.t. every argument (as arrays)."""
    leaves = [_leaf(a) for a in args]
    out = fn(*leaves)
    bundle = grad(out, leaves, allow_unused=True)
    return float(out.data), [bundle[leaf].data for leaf in leaves]
