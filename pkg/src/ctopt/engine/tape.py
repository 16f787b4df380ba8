"""Scalar reverse-mode automatic differentiation on a flat, per-iteration tape.

Every operation is evaluated eagerly: it appends one node holding its value
and the local partial derivative w.r.t. each parent. ``backward`` then runs a
single reverse sweep over the flat arrays, which is the hot loop and is
delegated to a compiled kernel when one is available.

Operations accept plain floats anywhere a :class:`Var` is accepted; an
operation whose inputs are all floats returns a float and records nothing.
"""
from __future__ import annotations

import math
from array import array
from typing import Iterable, Sequence

import numpy as np

from ..liberty import Lut2D, lut_eval_grad
from . import kernel


class TapeStateError(RuntimeError):
    pass


class ParamTensor:
    """Trainable values plus a gradient buffer of identical shape."""

    __slots__ = ("values", "grad")

    def __init__(self, values):
        self.values = np.array(values, dtype=float)
        self.grad = np.zeros_like(self.values)

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"ParamTensor(shape={self.values.shape})"


class Tape:
    __slots__ = ("vals", "ptr", "par", "partial", "leaves", "used")

    def __init__(self):
        self.vals = array("d")
        self.ptr = array("q", [0])
        self.par = array("q")
        self.partial = array("d")
        self.leaves: list[tuple[ParamTensor, int]] = []
        self.used = False

    def __len__(self):
        return len(self.vals)

    def node(self, value: float, parents: Sequence[int], partials: Sequence[float]) -> "Var":
        idx = len(self.vals)
        self.vals.append(value)
        self.par.extend(parents)
        self.partial.extend(partials)
        self.ptr.append(len(self.par))
        return Var(self, idx, value)

    def _leaf(self, value: float) -> "Var":
        idx = len(self.vals)
        self.vals.append(value)
        self.ptr.append(len(self.par))
        return Var(self, idx, value)

    def watch(self, param: ParamTensor) -> np.ndarray:
        """Leaf variables for every entry of ``param`` (same shape, object array)."""
        if self.used:
            raise TapeStateError("tape already consumed by backward()")
        start = len(self.vals)
        flat = param.values.ravel()
        self.vals.extend(flat.tolist())
        n = flat.size
        base = len(self.par)
        self.ptr.extend([base] * n)
        self.leaves.append((param, start))
        out = np.empty(n, dtype=object)
        for k, v in enumerate(flat.tolist()):
            out[k] = Var(self, start + k, v)
        return out.reshape(param.values.shape)

    def variable(self, value: float) -> "Var":
        """Free-standing leaf (gradients readable via :func:`grad_of`)."""
        return self._leaf(float(value))


class Var:
    """A scalar value recorded on a tape."""

    __slots__ = ("tape", "idx", "value")

    def __init__(self, tape: Tape, idx: int, value: float):
        self.tape = tape
        self.idx = idx
        self.value = value

    def __repr__(self):
        return f"Var({self.value!r})"

    def __float__(self):
        return self.value

    def __add__(self, other):
        if isinstance(other, Var):
            return self.tape.node(self.value + other.value, (self.idx, other.idx), (1.0, 1.0))
        return self.tape.node(self.value + other, (self.idx,), (1.0,))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Var):
            return self.tape.node(self.value - other.value, (self.idx, other.idx), (1.0, -1.0))
        return self.tape.node(self.value - other, (self.idx,), (1.0,))

    def __rsub__(self, other):
        return self.tape.node(other - self.value, (self.idx,), (-1.0,))

    def __mul__(self, other):
        if isinstance(other, Var):
            return self.tape.node(self.value * other.value, (self.idx, other.idx), (other.value, self.value))
        return self.tape.node(self.value * other, (self.idx,), (float(other),))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            inv = 1.0 / other.value
            return self.tape.node(self.value * inv, (self.idx, other.idx), (inv, -self.value * inv * inv))
        return self.tape.node(self.value / other, (self.idx,), (1.0 / other,))

    def __neg__(self):
        return self.tape.node(-self.value, (self.idx,), (-1.0,))

    def __pow__(self, k):
        if isinstance(k, Var):
            raise TypeError("variable exponents are not supported")
        return self.tape.node(self.value**k, (self.idx,), (k * self.value ** (k - 1),))


Scalar = "Var | float"


def value(x) -> float:
    return x.value if isinstance(x, Var) else float(x)


def _tape_of(xs: Iterable) -> Tape | None:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def combine(val: float, args: Sequence, partials: Sequence[float]):
    """Record ``val`` with the given partials w.r.t. ``args`` (floats skipped)."""
    tape = _tape_of(args)
    if tape is None:
        return val
    pars, ds = [], []
    for a, d in zip(args, partials):
        if isinstance(a, Var):
            pars.append(a.idx)
            ds.append(d)
    return tape.node(val, pars, ds)


def vsum(xs: Sequence):
    vals = [value(x) for x in xs]
    return combine(math.fsum(vals) if len(vals) > 2 else sum(vals), xs, [1.0] * len(xs))


def dot(ws: Sequence, xs: Sequence):
    """Sum of ``ws[k] * xs[k]`` as one node."""
    wv = [value(w) for w in ws]
    xv = [value(x) for x in xs]
    total = 0.0
    for a, b in zip(wv, xv):
        total += a * b
    return combine(total, list(ws) + list(xs), xv + wv)


def lse(xs: Sequence, gamma: float):
    """Smooth maximum ``gamma * log(sum(exp(x / gamma)))`` with max-shift."""
    if len(xs) == 0:
        raise ValueError("lse of an empty sequence")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    vals = [value(x) for x in xs]
    m = max(vals)
    ex = [math.exp((v - m) / gamma) for v in vals]
    s = sum(ex)
    return combine(m + gamma * math.log(s), xs, [e / s for e in ex])


def hardmax(xs: Sequence):
    """Exact maximum; the gradient flows to the first maximizer."""
    if len(xs) == 0:
        raise ValueError("max of an empty sequence")
    vals = [value(x) for x in xs]
    k = max(range(len(vals)), key=vals.__getitem__)
    return combine(vals[k], [xs[k]], [1.0])


def softmax(xs: Sequence) -> list:
    """Max-shifted softmax; each output is one node over its logit and the row log-normalizer."""
    if len(xs) == 0:
        raise ValueError("softmax of an empty sequence")
    vals = [value(x) for x in xs]
    m = max(vals)
    ex = [math.exp(v - m) for v in vals]
    s = math.fsum(ex)
    probs = [e / s for e in ex]
    tape = _tape_of(xs)
    if tape is None:
        return probs
    norm = tape.node(m + math.log(s), [x.idx for x in xs if isinstance(x, Var)],
                     [p for x, p in zip(xs, probs) if isinstance(x, Var)])
    out = []
    for x, p in zip(xs, probs):
        if isinstance(x, Var):
            out.append(tape.node(p, (x.idx, norm.idx), (p, -p)))
        else:
            out.append(tape.node(p, (norm.idx,), (-p,)))
    return out


def min0(x):
    """``min(0, x)``; subgradient 0 at ``x == 0``."""
    v = value(x)
    return combine(v if v < 0.0 else 0.0, [x], [1.0 if v < 0.0 else 0.0])


def lut_eval_diff(lut: Lut2D, slew, load):
    v, ds, dl = lut_eval_grad(lut, value(slew), value(load))
    return combine(v, [slew, load], [ds, dl])


def map_sum(xs: Sequence, f, df):
    """``sum(f(x))`` as one node with partials ``df(x)``."""
    vals = [value(x) for x in xs]
    return combine(math.fsum(f(v) for v in vals), xs, [df(v) for v in vals])


def backward(root) -> np.ndarray:
    """Accumulate d(root)/d(param) into every watched :class:`ParamTensor`.

    Returns the full adjoint vector (indexed by node) for inspection.
    """
    if not isinstance(root, Var):
        raise TypeError("backward() needs a taped value")
    tape = root.tape
    if tape.used:
        raise TapeStateError("backward() called twice on the same tape; rebuild the graph")
    tape.used = True
    n = len(tape.vals)
    grad = np.zeros(n, dtype=float)
    grad[root.idx] = 1.0
    kernel.reverse_sweep(
        np.frombuffer(tape.ptr, dtype=np.int64),
        np.frombuffer(tape.par, dtype=np.int64) if len(tape.par) else np.zeros(1, dtype=np.int64),
        np.frombuffer(tape.partial, dtype=np.float64) if len(tape.partial) else np.zeros(1),
        grad,
        root.idx,
    )
    for param, start in tape.leaves:
        param.grad += grad[start:start + param.values.size].reshape(param.values.shape)
    return grad


def grad_of(adjoint: np.ndarray, x) -> float:
    return float(adjoint[x.idx]) if isinstance(x, Var) else 0.0
