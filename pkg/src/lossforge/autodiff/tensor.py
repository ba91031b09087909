"""Dense float64 tensors with a recorded computation graph.

Every op returns a new :class:`Tensor` whose ``vjp`` closure maps an upstream
gradient to gradients for the op's parents.  The closures are written with
Tensor ops themselves, so the backward pass can be recorded and
differentiated again (double backward).
"""

from __future__ import annotations

import itertools
import threading

import numpy as np

from ..errors import NumericalError, ShapeError

_state = threading.local()
_counter = itertools.count()


def _recording():
    return getattr(_state, "record", True)


def _active_tape():
    return getattr(_state, "tape", None)


class no_record:
    """Context manager that disables graph construction on this thread."""

    def __enter__(self):
        self._prev = _recording()
        _state.record = False
        return self

    def __exit__(self, *exc):
        _state.record = self._prev
        return False


class recording_into:
    """Route newly created nodes on this thread into ``tape.nodes``."""

    def __init__(self, tape):
        self.tape = tape

    def __enter__(self):
        self._prev = _active_tape()
        _state.tape = self.tape
        return self.tape

    def __exit__(self, *exc):
        _state.tape = self._prev
        return False


class Tensor:
    __slots__ = ("data", "parents", "vjp", "op", "index", "requires_grad", "name", "__weakref__")

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(arr)):
            raise NumericalError("non-finite value in leaf tensor", None)
        self.data = arr
        self.parents = ()
        self.vjp = None
        self.op = "leaf"
        self.index = None
        self.requires_grad = bool(requires_grad)
        self.name = name

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _result(cls, data, parents, vjp, op):
        out = cls.__new__(cls)
        out.data = data
        out.op = op
        out.name = None
        out.requires_grad = _recording() and any(p.requires_grad for p in parents)
        if out.requires_grad:
            out.parents = parents
            out.vjp = vjp
        else:
            out.parents = ()
            out.vjp = None
        tape = _active_tape()
        if tape is not None and out.requires_grad:
            out.index = len(tape.nodes)
            tape.nodes.append(out)
        else:
            out.index = next(_counter)
        if not np.all(np.isfinite(data)):
            raise NumericalError(f"non-finite result in op '{op}' (op index {out.index})", out.index)
        return out

    # -- basic properties -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({np.array2string(self.data, precision=6)}{flag})"

    # -- operators ------------------------------------------------------------

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

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis, keepdims)

    def mean(self, axis=None):
        n = self.size if axis is None else self.shape[axis]
        return reduce_sum(self, axis) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _check_broadcast(a, b, op):
    sa, sb = a.shape, b.shape
    if sa == sb or a.size == 1 or b.size == 1:
        return
    if len(sa) == 2 and sb in ((sa[1],), (1, sa[1])):
        return
    if len(sb) == 2 and sa in ((sb[1],), (1, sb[1])):
        return
    raise ShapeError(f"{op}: unsupported broadcast between {sa} and {sb}")


def unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (adjoint of numpy broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = reduce_sum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = reduce_sum(g, axis=axes, keepdims=True)
    if g.shape != tuple(shape):
        g = reshape(g, tuple(shape))
    return g


# ---------------------------------------------------------------------------
# elementwise binary ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), vjp, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def vjp(g):
        return unbroadcast(g, a.shape), unbroadcast(neg(g), b.shape)

    return Tensor._result(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def vjp(g):
        return unbroadcast(mul(g, b), a.shape), unbroadcast(mul(g, a), b.shape)

    return Tensor._result(a.data * b.data, (a, b), vjp, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data / b.data

    def vjp(g):
        ga = div(g, b)
        gb = neg(mul(ga, div(a, b)))
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return Tensor._result(data, (a, b), vjp, "div")


def neg(a):
    a = as_tensor(a)
    return Tensor._result(-a.data, (a,), lambda g: (neg(g),), "neg")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise ShapeError("matmul supports 1-D and 2-D operands only")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} not aligned")

    def vjp(g):
        if a.ndim == 2 and b.ndim == 2:
            return matmul(g, transpose(b)), matmul(transpose(a), g)
        if a.ndim == 2 and b.ndim == 1:
            return outer(g, b), matmul(g, a)
        if a.ndim == 1 and b.ndim == 2:
            return matmul(b, g), outer(a, g)
        return mul(g, b), mul(g, a)

    return Tensor._result(a.data @ b.data, (a, b), vjp, "matmul")


def outer(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError("outer expects 1-D operands")

    def vjp(g):
        return matmul(g, b), matmul(a, g)

    return Tensor._result(np.outer(a.data, b.data), (a, b), vjp, "outer")


# ---------------------------------------------------------------------------
# elementwise unary ops


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)
    out = None

    def vjp(g):
        return (mul(g, out),)

    out = Tensor._result(data, (a,), vjp, "exp")
    return out


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    return Tensor._result(data, (a,), lambda g: (div(g, a),), "log")


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)
    out = None

    def vjp(g):
        return (mul(g, mul(out, sub(1.0, out))),)

    out = Tensor._result(data, (a,), vjp, "sigmoid")
    return out


def tanh(a):
    a = as_tensor(a)
    out = None

    def vjp(g):
        return (mul(g, sub(1.0, mul(out, out))),)

    out = Tensor._result(np.tanh(a.data), (a,), vjp, "tanh")
    return out


def relu(a):
    a = as_tensor(a)
    mask = (a.data > 0).astype(np.float64)
    return Tensor._result(a.data * mask, (a,), lambda g: (mul(g, Tensor(mask)),), "relu")


def absolute(a):
    a = as_tensor(a)
    sign = np.sign(a.data)
    return Tensor._result(np.abs(a.data), (a,), lambda g: (mul(g, Tensor(sign)),), "abs")


def stop_gradient(a):
    return Tensor(as_tensor(a).data)


# ---------------------------------------------------------------------------
# shape ops and reductions


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return Tensor._result(a.data.reshape(shape), (a,), lambda g: (reshape(g, old),), "reshape")


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError("transpose expects a 2-D tensor")
    return Tensor._result(a.data.T.copy(), (a,), lambda g: (transpose(g),), "transpose")


def broadcast_to(a, shape):
    """Explicit broadcast; implicit broadcasting is deliberately narrow."""
    a = as_tensor(a)
    shape = tuple(shape)
    src = a.shape
    if a.ndim < len(shape):
        src_padded = (1,) * (len(shape) - a.ndim) + src
    else:
        src_padded = src
    data = np.broadcast_to(a.data.reshape(src_padded), shape).copy()
    return Tensor._result(data, (a,), lambda g: (unbroadcast(g, src),), "broadcast_to")


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            gk = reshape(g, (1,) * len(shape))
        elif keepdims:
            gk = g
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            axes = tuple(ax % len(shape) for ax in axes)
            kshape = tuple(1 if i in axes else n for i, n in enumerate(shape))
            gk = reshape(g, kshape)
        return (broadcast_to(gk, shape),)

    return Tensor._result(np.asarray(data, dtype=np.float64), (a,), vjp, "sum")


def reduce_max(a, axis=None, keepdims=False):
    """Max reduction; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    x = a.data
    if axis is None:
        mask = np.zeros(x.size)
        mask[np.argmax(x)] = 1.0
        mask = mask.reshape(x.shape)
    else:
        idx = np.expand_dims(np.argmax(x, axis=axis), axis)
        mask = np.zeros_like(x)
        np.put_along_axis(mask, idx, 1.0, axis=axis)
    data = np.max(x, axis=axis, keepdims=keepdims)
    shape = x.shape

    def vjp(g):
        if axis is None:
            gk = reshape(g, (1,) * len(shape))
        elif keepdims:
            gk = g
        else:
            kshape = tuple(1 if i == axis % len(shape) else n for i, n in enumerate(shape))
            gk = reshape(g, kshape)
        return (mul(broadcast_to(gk, shape), Tensor(mask)),)

    return Tensor._result(np.asarray(data, dtype=np.float64), (a,), vjp, "max")


def getitem(a, index):
    a = as_tensor(a)
    shape = a.shape
    data = np.array(a.data[index], dtype=np.float64)
    return Tensor._result(data, (a,), lambda g: (scatter_add(g, index, shape),), "getitem")


def scatter_add(g, index, shape):
    """Adjoint of ``getitem``: add ``g`` into a zero tensor at ``index``."""
    g = as_tensor(g)
    data = np.zeros(shape)
    np.add.at(data, index, g.data)
    return Tensor._result(data, (g,), lambda gg: (getitem(gg, index),), "scatter_add")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(lo), int(hi))
            out.append(getitem(g, tuple(sl)))
        return tuple(out)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return Tensor._result(data, tuple(tensors), vjp, "concat")


# ---------------------------------------------------------------------------
# composites


def logsumexp(a, axis=-1, keepdims=False):
    """Stable log-sum-exp; the shift is treated as a constant."""
    a = as_tensor(a)
    m = np.max(a.data, axis=axis, keepdims=True)
    shifted = sub(a, Tensor(np.broadcast_to(m, a.shape)))
    s = reduce_sum(exp(shifted), axis=axis, keepdims=True)
    out = add(log(s), Tensor(m))
    if keepdims:
        return out
    return reshape(out, np.squeeze(m, axis=axis).shape)


def softmax(a, axis=-1):
    a = as_tensor(a)
    lse = logsumexp(a, axis=axis, keepdims=True)
    return exp(sub(a, broadcast_to(lse, a.shape)))


def dot(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape} differ")
    return reduce_sum(mul(a, b))
