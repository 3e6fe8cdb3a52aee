"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 ndarray plus the expression graph needed to
accumulate gradients with one backward pass from a scalar output.  Ops are
vectorized: the tape stays short (one node per array operation) while numpy
does the numeric work, which keeps gradient evaluation fast and -- because
every reduction is an ordinary fixed-order numpy sum -- bit-deterministic.

The module-level functions (``exp``, ``log``, ``where``, ...) accept either
a Tensor or a plain ndarray/scalar and fall back to numpy for the latter,
so model code written against this module can be evaluated with or without
gradient tracking from the same source.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce an upstream gradient back to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Tensor:
    """Node in the backward graph: a value plus how to push gradients back."""

    __slots__ = ("value", "grad", "_parents", "_vjp")
    __array_ufunc__ = None  # force numpy to defer to our reflected operators

    def __init__(self, value, _parents: tuple = (), _vjp: Callable | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Array | None = None
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(node.grad)):
                if pg is None:
                    continue
                pg = _unbroadcast(np.asarray(pg, dtype=np.float64), parent.value.shape)
                parent.grad = pg if parent.grad is None else parent.grad + pg

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
        return Tensor(-self.value, (self,), lambda g: (-g,))

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        """Basic indexing only (ints/slices/ellipsis); use take() for fancy."""
        out = self.value[key]

        def vjp(g):
            z = np.zeros_like(self.value)
            z[key] += g  # basic indexing never selects an element twice
            return (z,)

        return Tensor(out, (self,), vjp)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def value(x) -> Array:
    """Raw ndarray behind either a Tensor or a plain array."""
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _coerce(x):
    if type(x) is np.ndarray and x.dtype == np.float64:
        return x
    return np.asarray(x, dtype=np.float64)


def _binary(a, b, fval, da, db):
    at = isinstance(a, Tensor)
    bt = isinstance(b, Tensor)
    av = a.value if at else _coerce(a)
    bv = b.value if bt else _coerce(b)
    out = fval(av, bv)
    if not (at or bt):
        return out

    parents = tuple(x for x, flag in ((a, at), (b, bt)) if flag)

    def vjp(g):
        res = []
        if at:
            res.append(da(g, av, bv, out))
        if bt:
            res.append(db(g, av, bv, out))
        return res

    return Tensor(out, parents, vjp)


def _unary(a, fval, da):
    if not isinstance(a, Tensor):
        return fval(_coerce(a))
    av = a.value
    out = fval(av)
    return Tensor(out, (a,), lambda g: (da(g, av, out),))


def add(a, b):
    return _binary(a, b, np.add, lambda g, *_: g, lambda g, *_: g)


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, *_: g, lambda g, *_: -g)


def mul(a, b):
    return _binary(a, b, np.multiply,
                   lambda g, av, bv, o: g * bv,
                   lambda g, av, bv, o: g * av)


def div(a, b):
    return _binary(a, b, np.divide,
                   lambda g, av, bv, o: g / bv,
                   lambda g, av, bv, o: -g * o / bv)


def power(a, p: float):
    return _unary(a, lambda v: np.power(v, p),
                  lambda g, v, o: g * p * np.power(v, p - 1))


def exp(a):
    return _unary(a, np.exp, lambda g, v, o: g * o)


def log(a):
    return _unary(a, np.log, lambda g, v, o: g / v)


def sqrt(a):
    return _unary(a, np.sqrt, lambda g, v, o: 0.5 * g / o)


def sin(a):
    return _unary(a, np.sin, lambda g, v, o: g * np.cos(v))


def cos(a):
    return _unary(a, np.cos, lambda g, v, o: -g * np.sin(v))


def tan(a):
    return _unary(a, np.tan, lambda g, v, o: g * (1.0 + o * o))


def where(cond, a, b):
    """Branch select; ``cond`` is a plain boolean array, never a Tensor."""
    cond = np.asarray(cond, dtype=bool)
    return _binary(a, b, lambda av, bv: np.where(cond, av, bv),
                   lambda g, *_: np.where(cond, g, 0.0),
                   lambda g, *_: np.where(cond, 0.0, g))


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    if not isinstance(a, Tensor):
        return np.sum(a, axis=axis, keepdims=keepdims)
    av = a.value
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, av.shape).copy(),)

    return Tensor(out, (a,), vjp)


def matmul(a, b):
    """Batched matrix product; operands must be at least 2-D."""

    def da(g, av, bv, o):
        return np.matmul(g, np.swapaxes(bv, -1, -2))

    def db(g, av, bv, o):
        return np.matmul(np.swapaxes(av, -1, -2), g)

    return _binary(a, b, np.matmul, da, db)


def swapaxes(a, ax1: int, ax2: int):
    return _unary(a, lambda v: np.swapaxes(v, ax1, ax2),
                  lambda g, v, o: np.swapaxes(g, ax1, ax2))


def reshape(a, shape):
    return _unary(a, lambda v: np.reshape(v, shape),
                  lambda g, v, o: np.reshape(g, v.shape))


def take(a, idx):
    """Gather rows along axis 0 with an integer index array."""
    idx = np.asarray(idx)
    if not isinstance(a, Tensor):
        return np.asarray(a, dtype=np.float64)[idx]
    av = a.value
    out = av[idx]

    def vjp(g):
        # segment-sum via bincount: much faster than np.add.at
        g = np.ascontiguousarray(g)
        if av.ndim == 1:
            return (np.bincount(idx, weights=g, minlength=av.shape[0]),)
        cols = g.reshape(idx.shape[0], -1)
        z = np.empty((av.shape[0], cols.shape[1]))
        for k in range(cols.shape[1]):
            z[:, k] = np.bincount(idx, weights=cols[:, k], minlength=av.shape[0])
        return (z.reshape(av.shape),)

    return Tensor(out, (a,), vjp)


def stack(parts: Sequence, axis: int = -1):
    if not any(isinstance(p, Tensor) for p in parts):
        return np.stack(parts, axis=axis)
    vals = [value(p) for p in parts]
    out = np.stack(vals, axis=axis)
    parents = tuple(p for p in parts if isinstance(p, Tensor))

    def vjp(g):
        slices = np.moveaxis(g, axis, 0)
        return tuple(slices[i] for i, p in enumerate(parts) if isinstance(p, Tensor))

    return Tensor(out, parents, vjp)
