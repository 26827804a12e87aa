"""Reverse-mode differentiation over dense 2-D float64 arrays.

Operations executed while a :class:`Tape` is active are appended to it in
execution order, together with a closure computing input gradients from the
output gradient. :func:`backward` replays the tape in reverse.

    >>> x = Tensor([[3.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_all(x * x)
    >>> float(backward(tape, loss)[x][0, 0])
    6.0

Broadcasting is limited to a 1x1 operand against a tensor of any shape.
"""

import contextlib
import os
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

from . import segments
from .errors import DomainError, ShapeError

_check_finite = os.environ.get("NAGG_CHECK_FINITE", "") not in ("", "0")
_tapes = []
_faults = {}


def set_check_finite(flag):
    """Toggle NaN/Inf checks on every op output. Returns the previous setting."""
    global _check_finite
    previous, _check_finite = _check_finite, bool(flag)
    return previous


class Tensor:
    """A 2-D float64 array that may participate in differentiation.

    0-d input becomes 1x1 and 1-d input becomes a column.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be at most 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
            raise DomainError(f"non-finite value {arr[bad]!r} at {bad}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @classmethod
    def _wrap(cls, arr):
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.name = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    def item(self):
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor._wrap(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul_elem(self, other)

    def __rmul__(self, other):
        return mul_elem(other, self)

    def __truediv__(self, other):
        return div_elem(self, other)

    def __rtruediv__(self, other):
        return div_elem(other, self)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return pow_elem(self, exponent)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; tapes nest and the innermost one records.
    A tape must stay on the thread that records into it.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tapes.append(self)
        return self

    def __exit__(self, *exc):
        popped = _tapes.pop()
        assert popped is self, "tapes exited out of order"

    def leaves(self):
        produced = {id(n.output) for n in self.nodes}
        seen = set()
        out = []
        for node in self.nodes:
            for t in node.inputs:
                if t.requires_grad and id(t) not in produced and id(t) not in seen:
                    seen.add(id(t))
                    out.append(t)
        return out


@contextlib.contextmanager
def no_grad():
    """Suspend recording on all enclosing tapes."""
    _tapes.append(None)
    try:
        yield
    finally:
        _tapes.pop()


@contextlib.contextmanager
def inject_fault(op, factor=1.1):
    """Scale every gradient produced by ``op``'s backward rule by ``factor``.

    Exists so gradient checks can be shown to catch a broken rule.
    """
    _faults[op] = factor
    try:
        yield
    finally:
        del _faults[op]


def make_op(name, data, inputs, backward_rule):
    """Wrap ``data`` as the output of op ``name`` and record it if needed.

    ``backward_rule(grad_out)`` must return one gradient array (or None)
    per entry of ``inputs``.
    """
    if _check_finite and not np.all(np.isfinite(data)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(data))[0])
        raise DomainError(f"{name} produced non-finite value at {bad}")
    out = Tensor._wrap(data)
    tape = _tapes[-1] if _tapes else None
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append(Node(name, tuple(inputs), out, backward_rule))
    return out


def backward(tape, loss, wrt=None):
    """Gradients of the scalar ``loss`` with respect to leaf tensors.

    Returns a dict keyed by tensor. With ``wrt=None`` every trainable leaf
    seen on the tape is included; leaves the loss does not depend on get
    zeros. Each returned gradient is also stored on ``tensor.grad``.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"loss must be 1x1, got {loss.shape}")
    if not any(n.output is loss for n in tape.nodes):
        raise ValueError("loss was not recorded on this tape")
    grads = {id(loss): np.ones((1, 1))}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        factor = _faults.get(node.op)
        for t, tg in zip(node.inputs, node.backward(g)):
            if tg is None or not t.requires_grad:
                continue
            if factor is not None:
                tg = tg * factor
            key = id(t)
            grads[key] = grads[key] + tg if key in grads else tg
    targets = tape.leaves() if wrt is None else wrt
    result = {}
    for t in targets:
        g = grads.get(id(t))
        result[t] = np.zeros_like(t.data) if g is None else g
        t.grad = result[t]
    return result


# -- elementwise and linear algebra -------------------------------------------


def _pair(a, b, name):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.shape != (1, 1) and b.shape != (1, 1):
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}")
    return a, b


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return np.sum(g).reshape(1, 1)


def add(a, b):
    a, b = _pair(a, b, "add")
    return make_op("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _pair(a, b, "sub")
    return make_op("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul_elem(a, b):
    a, b = _pair(a, b, "mul_elem")
    return make_op("mul_elem", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape),
                              _unbroadcast(g * a.data, b.shape)))


def div_elem(a, b):
    a, b = _pair(a, b, "div_elem")
    if np.any(b.data == 0):
        bad = tuple(int(i) for i in np.argwhere(b.data == 0)[0])
        raise DomainError(f"div_elem: zero divisor at {bad}")
    out = a.data / b.data

    def rule(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * out / b.data, b.shape))

    return make_op("div_elem", out, (a, b), rule)


def scalar_mul(a, c):
    c = float(c)
    return make_op("scalar_mul", a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b):
    if a.cols != b.rows:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return make_op("matmul", a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def relu(a):
    mask = a.data > 0
    return make_op("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.2):
    scale = np.where(a.data > 0, 1.0, slope)
    return make_op("leaky_relu", a.data * scale, (a,), lambda g: (g * scale,))


def exp(a):
    out = np.exp(a.data)
    return make_op("exp", out, (a,), lambda g: (g * out,))


def log(a):
    if np.any(a.data <= 0):
        bad = tuple(int(i) for i in np.argwhere(a.data <= 0)[0])
        raise DomainError(f"log: non-positive input {a.data[bad]!r} at {bad}")
    return make_op("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def pow_elem(a, exponent):
    e = float(exponent)
    if not e.is_integer() and np.any(a.data < 0):
        bad = tuple(int(i) for i in np.argwhere(a.data < 0)[0])
        raise DomainError(f"pow_elem: negative base {a.data[bad]!r} at {bad} "
                          f"with non-integer exponent {e}")
    if e < 1 and np.any(a.data == 0):
        bad = tuple(int(i) for i in np.argwhere(a.data == 0)[0])
        raise DomainError(f"pow_elem: zero base at {bad} with exponent {e}")
    out = np.power(a.data, e)
    return make_op("pow_elem", out, (a,),
                   lambda g: (g * e * np.power(a.data, e - 1.0),))


def softplus(a):
    return make_op("softplus", np.logaddexp(0.0, a.data), (a,),
                   lambda g: (g * expit(a.data),))


def sum_all(a):
    return make_op("sum_all", np.sum(a.data).reshape(1, 1), (a,),
                   lambda g: (np.full(a.shape, g[0, 0]),))


def transpose(a):
    return make_op("transpose", a.data.T.copy(), (a,), lambda g: (g.T,))


def concat_cols(parts):
    parts = [as_tensor(p) for p in parts]
    if len({p.rows for p in parts}) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def rule(g):
        return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return make_op("concat_cols", np.hstack([p.data for p in parts]), tuple(parts), rule)


def slice_rows(a, start, stop):
    def rule(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return make_op("slice_rows", a.data[start:stop].copy(), (a,), rule)


def gather_rows(a, index):
    """Rows of ``a`` selected by ``index`` (repeats allowed)."""
    index = np.asarray(index, dtype=np.int64)

    def rule(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return make_op("gather_rows", a.data[index], (a,), rule)


def scale_rows(a, w):
    """Multiply row ``i`` of ``a`` by ``w[i, 0]``; ``w`` is a column."""
    a, w = as_tensor(a), as_tensor(w)
    if w.shape != (a.rows, 1):
        raise ShapeError(f"scale_rows: expected weights ({a.rows}, 1), got {w.shape}")
    return make_op("scale_rows", a.data * w.data, (a, w),
                   lambda g: (g * w.data, np.sum(g * a.data, axis=1, keepdims=True)))


def row_softmax(a):
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    return make_op("row_softmax", s, (a,),
                   lambda g: (s * (g - np.sum(g * s, axis=1, keepdims=True)),))


# -- segment reductions ---------------------------------------------------------


def _check_offsets(x, offsets, name):
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets[0] != 0 or offsets[-1] != x.rows or np.any(np.diff(offsets) < 0):
        raise ShapeError(f"{name}: offsets do not partition {x.rows} edge rows")
    return offsets


def segment_sum(x, offsets):
    """Per-segment column sums of an edge-indexed tensor."""
    offsets = _check_offsets(x, offsets, "segment_sum")
    return make_op("segment_sum", segments.segment_sum(x.data, offsets), (x,),
                   lambda g: (segments.expand(g, offsets),))


def segment_max(x, offsets):
    """Per-segment column maxima; gradient goes to the lowest-index argmax."""
    offsets = _check_offsets(x, offsets, "segment_max")
    empty = np.flatnonzero(np.diff(offsets) == 0)
    if empty.size:
        raise DomainError(f"segment_max: segment {int(empty[0])} is empty")
    arg = segments.segment_argmax(x.data, offsets)
    cols = np.arange(x.cols)[None, :]

    def rule(g):
        full = np.zeros_like(x.data)
        full[arg, cols] = g
        return (full,)

    return make_op("segment_max", x.data[arg, cols], (x,), rule)


def segment_softmax(x, offsets, gamma=1.0):
    """Softmax of ``gamma * x`` within each segment, column by column.

    ``gamma`` may be a float or a 1x1 tensor; gradients flow to both.
    """
    offsets = _check_offsets(x, offsets, "segment_softmax")
    gamma = as_tensor(gamma)
    if gamma.shape != (1, 1):
        raise ShapeError(f"segment_softmax: gamma must be 1x1, got {gamma.shape}")
    s = segments.segment_softmax(gamma.item() * x.data, offsets)

    def rule(g):
        dz = s * (g - segments.expand(segments.segment_sum(g * s, offsets), offsets))
        return dz * gamma.item(), np.sum(dz * x.data).reshape(1, 1)

    return make_op("segment_softmax", s, (x, gamma), rule)


# -- gradient checking ---------------------------------------------------------------


@dataclass
class GradReport:
    max_rel_error: float
    worst_coordinate: tuple
    analytic: float
    numeric: float


def grad_check(f, x, step=1e-5):
    """Compare the recorded gradient of scalar ``f`` at ``x`` with central differences.

    The error per coordinate is ``|a - n| / max(1, |a|, |n|)``; the report
    holds the worst coordinate.
    """
    x0 = np.array(as_tensor(x).data)
    leaf = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        y = f(leaf)
    if y.shape != (1, 1):
        raise ShapeError(f"grad_check: f must return 1x1, got {y.shape}")
    analytic = backward(tape, y, wrt=[leaf])[leaf] if y.requires_grad else np.zeros_like(x0)

    numeric = np.empty_like(x0)
    with no_grad():
        for idx in np.ndindex(*x0.shape):
            xp = x0.copy()
            xp[idx] += step
            xm = x0.copy()
            xm[idx] -= step
            fp = f(Tensor._wrap(xp)).item()
            fm = f(Tensor._wrap(xm)).item()
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise DomainError(f"grad_check: f is not finite near x at {idx}")
            numeric[idx] = (fp - fm) / (2.0 * step)

    err = np.abs(analytic - numeric) / np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    worst = np.unravel_index(int(np.argmax(err)), err.shape)
    return GradReport(float(err[worst]), tuple(int(i) for i in worst),
                      float(analytic[worst]), float(numeric[worst]))
