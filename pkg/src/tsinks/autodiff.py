"""Reverse-mode automatic differentiation over an explicit tape.

Every primitive applied to a Tensor appends one node (op name, parent
indices, float64 value, and a vector-Jacobian closure) to its Tape. Parents
always precede children, so backward() is a single reverse sweep that
accumulates adjoints without a topological sort. Values are checked for
finiteness as they are produced; the first offending node is named in the
error, which is what the training loop's abort diagnostics rely on.

Scalars and numpy arrays mix freely with Tensors in arithmetic: they are
lifted to constant nodes. Gradients flow only into leaf() nodes.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special as _sp

from .errors import NumericsError, UsageError


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    grad = np.asarray(grad, dtype=np.float64)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class _Node:
    __slots__ = ("op", "parents", "value", "vjp")

    def __init__(self, op: str, parents: tuple[int, ...], value: np.ndarray,
                 vjp: Optional[Callable[[np.ndarray], Sequence[np.ndarray]]]):
        self.op = op
        self.parents = parents
        self.value = value
        self.vjp = vjp


class Tensor:
    """Handle to a single node of a Tape."""

    # numpy must defer to our reflected operators instead of broadcasting
    # elementwise over the Tensor object.
    __array_ufunc__ = None
    __slots__ = ("tape", "index")

    def __init__(self, tape: "Tape", index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        """Adjoint after backward(); zero for nodes the loss never reached."""
        if self.tape.adjoints is None:
            raise UsageError("grad requested before backward() was run")
        adj = self.tape.adjoints[self.index]
        return np.zeros_like(self.value) if adj is None else adj

    def __repr__(self) -> str:
        node = self.tape.nodes[self.index]
        return f"Tensor(op={node.op!r}, shape={self.value.shape})"

    # -- arithmetic sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def sum(self, axis=None) -> "Tensor":
        return tsum(self, axis=axis)

    def mean(self, axis=None) -> "Tensor":
        return tmean(self, axis=axis)

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)


class Tape:
    """Append-only list of primitive operations with values and adjoints."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[_Node] = []
        self.adjoints: Optional[list[Optional[np.ndarray]]] = None
        self.check_finite = check_finite

    def _push(self, op: str, parents: tuple[int, ...], value,
              vjp: Optional[Callable]) -> Tensor:
        value = np.asarray(value, dtype=np.float64)
        index = len(self.nodes)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NumericsError(f"non-finite value produced at node {index} ({op})")
        self.nodes.append(_Node(op, parents, value, vjp))
        self.adjoints = None  # any new node invalidates previous adjoints
        return Tensor(self, index)

    def leaf(self, value, name: str = "leaf") -> Tensor:
        """A differentiable input (parameter) node."""
        return self._push(f"leaf:{name}", (), value, None)

    def constant(self, value, name: str = "const") -> Tensor:
        """A node that never receives a gradient of its own."""
        return self._push(f"const:{name}", (), value, None)

    def backward(self, loss: Tensor) -> None:
        """Populate adjoints for every node reachable from `loss`."""
        if loss.tape is not self:
            raise UsageError("loss Tensor belongs to a different tape")
        if loss.value.shape != ():
            raise UsageError(
                f"backward() needs a scalar loss, got shape {loss.value.shape}")
        adjoints: list[Optional[np.ndarray]] = [None] * len(self.nodes)
        adjoints[loss.index] = np.ones((), dtype=np.float64)
        for i in range(loss.index, -1, -1):
            grad = adjoints[i]
            if grad is None:
                continue
            node = self.nodes[i]
            if not np.all(np.isfinite(grad)):
                raise NumericsError(
                    f"non-finite adjoint reached node {i} ({node.op})")
            if node.vjp is None:
                continue
            for parent, part in zip(node.parents, node.vjp(grad)):
                if adjoints[parent] is None:
                    adjoints[parent] = np.asarray(part, dtype=np.float64)
                else:
                    adjoints[parent] = adjoints[parent] + part
        self.adjoints = adjoints


def _lift(tape: Tape, x) -> Tensor:
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise UsageError("cannot combine Tensors from different tapes")
        return x
    return tape.constant(x)


def _tape_of(*args) -> Tape:
    for a in args:
        if isinstance(a, Tensor):
            return a.tape
    raise UsageError("at least one operand must be a Tensor")


# -- elementwise binary ------------------------------------------------------

def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    return tape._push("add", (a.index, b.index), av + bv,
                      lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    return tape._push("sub", (a.index, b.index), av - bv,
                      lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    return tape._push("mul", (a.index, b.index), av * bv,
                      lambda g: (_unbroadcast(g * bv, av.shape),
                                 _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    return tape._push("div", (a.index, b.index), av / bv,
                      lambda g: (_unbroadcast(g / bv, av.shape),
                                 _unbroadcast(-g * av / (bv * bv), bv.shape)))


# -- elementwise unary -------------------------------------------------------

def neg(a: Tensor) -> Tensor:
    return a.tape._push("neg", (a.index,), -a.value, lambda g: (-g,))


def sin(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._push("sin", (a.index,), np.sin(av), lambda g: (g * np.cos(av),))


def cos(a: Tensor) -> Tensor:
    av = a.value
    return a.tape._push("cos", (a.index,), np.cos(av), lambda g: (-g * np.sin(av),))


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.value)
    return a.tape._push("exp", (a.index,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    av = a.value
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(av)
    return a.tape._push("log", (a.index,), out, lambda g: (g / av,))


def log1p(a: Tensor) -> Tensor:
    av = a.value
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log1p(av)
    return a.tape._push("log1p", (a.index,), out, lambda g: (g / (1.0 + av),))


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.value)
    return a.tape._push("sqrt", (a.index,), out, lambda g: (g / (2.0 * out),))


def power(a: Tensor, exponent: float) -> Tensor:
    """a**p for a fixed (non-differentiated) real exponent."""
    if isinstance(exponent, Tensor):
        raise UsageError("power() exponent must be a plain number")
    p = float(exponent)
    av = a.value
    with np.errstate(invalid="ignore", divide="ignore"):
        out = av ** p
        return a.tape._push("power", (a.index,), out,
                            lambda g: (g * p * av ** (p - 1.0),))


def softplus(a: Tensor) -> Tensor:
    """ln(1 + exp(a)), evaluated stably; derivative is the logistic sigmoid."""
    av = a.value
    return a.tape._push("softplus", (a.index,), np.logaddexp(0.0, av),
                        lambda g: (g * _sp.expit(av),))


def lgamma(a: Tensor) -> Tensor:
    av = a.value
    with np.errstate(invalid="ignore", divide="ignore"):
        out = _sp.gammaln(av)
    return a.tape._push("lgamma", (a.index,), out, lambda g: (g * _sp.psi(av),))


# -- shape & reduction -------------------------------------------------------

def transpose(a: Tensor) -> Tensor:
    if a.value.ndim != 2:
        raise UsageError(f"transpose expects a 2-D Tensor, got {a.value.shape}")
    return a.tape._push("transpose", (a.index,), a.value.T, lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.value.shape
    return a.tape._push("reshape", (a.index,), a.value.reshape(shape),
                        lambda g: (g.reshape(old),))


def tsum(a: Tensor, axis=None) -> Tensor:
    av = a.value

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, av.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

    return a.tape._push("sum", (a.index,), np.sum(av, axis=axis), vjp)


def tmean(a: Tensor, axis=None) -> Tensor:
    count = a.value.size if axis is None else a.value.shape[axis]
    return div(tsum(a, axis=axis), float(count))


def matmul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2:
        raise UsageError(
            f"matmul expects 2-D operands, got {av.shape} @ {bv.shape}")
    return tape._push("matmul", (a.index, b.index), av @ bv,
                      lambda g: (g @ bv.T, av.T @ g))


# -- fused likelihood head ---------------------------------------------------

def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Per-row negative log softmax probability of the integer labels.

    logits: (B, C) Tensor; labels: (B,) integer array (not differentiated).
    Returns a (B,) Tensor; stable via max subtraction.
    """
    labels = np.asarray(labels)
    z = logits.value
    if z.ndim != 2:
        raise UsageError(f"softmax_cross_entropy expects 2-D logits, got {z.shape}")
    if labels.shape != (z.shape[0],) or not np.issubdtype(labels.dtype, np.integer):
        raise UsageError("labels must be an integer vector matching the batch")
    if np.any(labels < 0) or np.any(labels >= z.shape[1]):
        raise UsageError("label id outside the number of classes")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = log_norm - shifted[rows, labels]

    def vjp(g):
        soft = np.exp(shifted)
        soft /= soft.sum(axis=1, keepdims=True)
        soft[rows, labels] -= 1.0
        return (g[:, None] * soft,)

    return logits.tape._push("softmax_xent", (logits.index,), losses, vjp)
