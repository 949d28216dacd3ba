"""Reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every operation applied to :class:`Var` handles.
Each record keeps the op name, the ids of its inputs and a vector-Jacobian
closure. :meth:`Tape.backward` sweeps the records once in reverse id order.

All op functions in this module are polymorphic: called with plain numbers or
``numpy`` arrays only, they return the plain ``numpy`` result and record
nothing. That lets the same numerical code run frozen (evaluation,
resampling) and on-tape (training).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

ARCSIN_FLOOR = 1e-12


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an op's rules."""


class TapeError(RuntimeError):
    """Raised on misuse of a tape or a non-finite adjoint."""


Vjp = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
ArrayLike = Union["Var", np.ndarray, float, int]


@dataclass
class Node:
    op: str
    inputs: Tuple[int, ...]
    vjp: Optional[Vjp]


class Var:
    """Handle to one tape node."""

    __slots__ = ("tape", "id", "shape")
    # ndarray <op> Var must defer to Var's reflected operators
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, tape: "Tape", node_id: int, shape: Tuple[int, ...]) -> None:
        self.tape = tape
        self.id = node_id
        self.shape = tuple(shape)

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.shape})"

    def __add__(self, other: ArrayLike) -> "Var":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Var":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Var":
        return subtract(self, other)

    def __rsub__(self, other: ArrayLike) -> "Var":
        return subtract(other, self)

    def __mul__(self, other: ArrayLike) -> "Var":
        return multiply(self, other)

    def __rmul__(self, other: ArrayLike) -> "Var":
        return multiply(other, self)

    def __truediv__(self, other: ArrayLike) -> "Var":
        return divide(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Var":
        return divide(other, self)

    def __neg__(self) -> "Var":
        return multiply(self, -1.0)

    def __pow__(self, exponent: int) -> "Var":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Var":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Var":
        return matmul(other, self)

    def __getitem__(self, index: Any) -> "Var":
        return getitem(self, index)

    def sum(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Var":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[Union[int, Tuple[int, ...]]] = None, keepdims: bool = False) -> "Var":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Var":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Gradients:
    """Adjoints produced by one backward sweep."""

    def __init__(self, tape: "Tape", adjoints: List[Optional[np.ndarray]]) -> None:
        self._tape = tape
        self._adjoints = adjoints

    def __getitem__(self, var: Var) -> np.ndarray:
        if var.tape is not self._tape:
            raise TapeError("variable belongs to a different tape")
        adj = self._adjoints[var.id]
        if adj is None:
            return np.zeros(var.shape)
        return adj

    def __contains__(self, var: Var) -> bool:
        return var.tape is self._tape and self._adjoints[var.id] is not None


class Tape:
    """Operation record for one forward build and at most one backward sweep."""

    def __init__(self) -> None:
        self.nodes: List[Node] = []
        self.values: List[np.ndarray] = []
        self.requires_grad: List[bool] = []
        self.adjoints: Optional[List[Optional[np.ndarray]]] = None
        self._swept = False

    def __len__(self) -> int:
        return len(self.nodes)

    def record(
        self,
        op: str,
        value: Any,
        inputs: Sequence[Var] = (),
        vjp: Optional[Vjp] = None,
        requires_grad: Optional[bool] = None,
    ) -> Var:
        if self._swept:
            raise TapeError("tape already swept; build a new tape")
        ids = tuple(v.id for v in inputs)
        node_id = len(self.nodes)
        if any(i >= node_id for i in ids):
            raise TapeError(f"{op}: input ids must precede node {node_id}")
        if requires_grad is None:
            requires_grad = any(self.requires_grad[i] for i in ids)
        value = np.asarray(value, dtype=np.float64)
        self.nodes.append(Node(op, ids, vjp if requires_grad else None))
        self.values.append(value)
        self.requires_grad.append(requires_grad)
        return Var(self, node_id, value.shape)

    def leaf(self, value: Any) -> Var:
        """Parameter leaf: adjoints accumulate here."""
        return self.record("leaf", np.array(value, dtype=np.float64, copy=True), requires_grad=True)

    def constant(self, value: Any) -> Var:
        return self.record("const", np.array(value, dtype=np.float64, copy=True), requires_grad=False)

    def backward(self, root: Var) -> Gradients:
        if root.tape is not self:
            raise TapeError("root belongs to a different tape")
        if self._swept:
            raise TapeError("second backward sweep on the same tape")
        if root.size != 1:
            raise TapeError(f"backward root must be scalar, got shape {root.shape}")
        self._swept = True

        adjoints: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        adjoints[root.id] = np.ones(root.shape)
        for node_id in range(root.id, -1, -1):
            grad = adjoints[node_id]
            node = self.nodes[node_id]
            if grad is None:
                continue
            if not np.all(np.isfinite(grad)):
                raise TapeError(f"non-finite adjoint at node {node_id} ({node.op})")
            if node.vjp is None:
                continue
            contributions = node.vjp(grad)
            for input_id, contrib in zip(node.inputs, contributions):
                if contrib is None or not self.requires_grad[input_id]:
                    continue
                contrib = _unbroadcast(np.asarray(contrib, dtype=np.float64), self.values[input_id].shape)
                if adjoints[input_id] is None:
                    adjoints[input_id] = contrib
                else:
                    adjoints[input_id] = adjoints[input_id] + contrib
        self.adjoints = adjoints
        return Gradients(self, adjoints)


def backward(tape: Tape, root: Var) -> Gradients:
    return tape.backward(root)


# helpers

def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _tape_of(*args: Any) -> Optional[Tape]:
    tape = None
    for arg in args:
        if isinstance(arg, Var):
            if tape is None:
                tape = arg.tape
            elif arg.tape is not tape:
                raise TapeError("operands recorded on different tapes")
    return tape


def value_of(x: ArrayLike) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _emit(op: str, args: Sequence[Any], value: Any, vjp: Vjp) -> Any:
    """Record ``op`` if any argument is a Var, otherwise return ``value`` as is."""
    tape = _tape_of(*args)
    if tape is None:
        return value
    positions = [i for i, a in enumerate(args) if isinstance(a, Var)]
    inputs = [args[i] for i in positions]

    def node_vjp(grad: np.ndarray) -> List[Optional[np.ndarray]]:
        grads = vjp(grad)
        return [grads[i] for i in positions]

    return tape.record(op, value, inputs, node_vjp)


def _broadcast_shape(op: str, *shapes: Tuple[int, ...]) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {shapes} do not broadcast") from exc


# elementwise binary ops

def add(a: ArrayLike, b: ArrayLike) -> Any:
    av, bv = value_of(a), value_of(b)
    _broadcast_shape("add", av.shape, bv.shape)
    return _emit("add", (a, b), av + bv, lambda g: (g, g))


def subtract(a: ArrayLike, b: ArrayLike) -> Any:
    av, bv = value_of(a), value_of(b)
    _broadcast_shape("subtract", av.shape, bv.shape)
    return _emit("subtract", (a, b), av - bv, lambda g: (g, -g))


def multiply(a: ArrayLike, b: ArrayLike) -> Any:
    av, bv = value_of(a), value_of(b)
    _broadcast_shape("multiply", av.shape, bv.shape)
    return _emit("multiply", (a, b), av * bv, lambda g: (g * bv, g * av))


def divide(a: ArrayLike, b: ArrayLike) -> Any:
    av, bv = value_of(a), value_of(b)
    _broadcast_shape("divide", av.shape, bv.shape)
    out = av / bv
    return _emit("divide", (a, b), out, lambda g: (g / bv, -g * out / bv))


def scale(a: ArrayLike, factor: float) -> Any:
    return multiply(a, float(factor))


def power(a: ArrayLike, exponent: int) -> Any:
    if isinstance(exponent, bool) or not isinstance(exponent, (int, np.integer)):
        raise ShapeError(f"power: exponent must be an integer, got {exponent!r}")
    exponent = int(exponent)
    av = value_of(a)
    out = av ** exponent if exponent >= 0 else 1.0 / av ** (-exponent)
    if exponent == 0:
        return _emit("power", (a,), np.ones_like(av), lambda g: (np.zeros_like(av),))
    return _emit("power", (a,), out, lambda g: (g * exponent * av ** (exponent - 1),))


def maximum(a: ArrayLike, floor: float) -> Any:
    """Hinge ``max(a, floor)`` against a constant; subgradient 0 at equality."""
    av = value_of(a)
    return _emit("maximum", (a,), np.maximum(av, floor), lambda g: (g * (av > floor),))


# elementwise unary ops

def sin(a: ArrayLike) -> Any:
    av = value_of(a)
    return _emit("sin", (a,), np.sin(av), lambda g: (g * np.cos(av),))


def cos(a: ArrayLike) -> Any:
    av = value_of(a)
    return _emit("cos", (a,), np.cos(av), lambda g: (-g * np.sin(av),))


def exp(a: ArrayLike) -> Any:
    out = np.exp(value_of(a))
    return _emit("exp", (a,), out, lambda g: (g * out,))


def log(a: ArrayLike) -> Any:
    av = value_of(a)
    return _emit("log", (a,), np.log(av), lambda g: (g / av,))


def sqrt(a: ArrayLike) -> Any:
    out = np.sqrt(value_of(a))
    return _emit("sqrt", (a,), out, lambda g: (g * 0.5 / out,))


def tanh(a: ArrayLike) -> Any:
    out = np.tanh(value_of(a))
    return _emit("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid(a: ArrayLike) -> Any:
    out = expit(value_of(a))
    return _emit("sigmoid", (a,), out, lambda g: (g * out * (1.0 - out),))


def swish(a: ArrayLike) -> Any:
    av = value_of(a)
    sig = expit(av)
    out = av * sig
    return _emit("swish", (a,), out, lambda g: (g * (sig + av * sig * (1.0 - sig)),))


def abs_(a: ArrayLike) -> Any:
    av = value_of(a)
    return _emit("abs", (a,), np.abs(av), lambda g: (g * np.sign(av),))


def arcsin(a: ArrayLike) -> Any:
    av = value_of(a)
    clipped = np.clip(av, -1.0, 1.0)

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        return (g / np.sqrt(np.maximum(1.0 - clipped * clipped, ARCSIN_FLOOR)),)

    return _emit("arcsin", (a,), np.arcsin(clipped), vjp)


def stop_gradient(a: ArrayLike) -> Any:
    if isinstance(a, Var):
        return a.tape.constant(a.value)
    return a


# reductions

def _normalize_axis(axis: Any, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def _expand_to(grad: np.ndarray, shape: Tuple[int, ...], axis: Optional[Tuple[int, ...]], keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        for ax in sorted(axis):
            grad = np.expand_dims(grad, ax)
    return np.broadcast_to(grad, shape)


def sum_(a: ArrayLike, axis: Any = None, keepdims: bool = False) -> Any:
    av = value_of(a)
    axes = _normalize_axis(axis, av.ndim)
    out = av.sum(axis=axes, keepdims=keepdims)
    return _emit("sum", (a,), out, lambda g: (_expand_to(g, av.shape, axes, keepdims),))


def mean(a: ArrayLike, axis: Any = None, keepdims: bool = False) -> Any:
    av = value_of(a)
    axes = _normalize_axis(axis, av.ndim)
    count = av.size if axes is None else int(np.prod([av.shape[ax] for ax in axes]))
    out = av.mean(axis=axes, keepdims=keepdims)
    return _emit("mean", (a,), out, lambda g: (_expand_to(g, av.shape, axes, keepdims) / count,))


def norm(a: ArrayLike, axis: Any = None, keepdims: bool = False) -> Any:
    """Euclidean norm; the gradient at a zero vector is taken as 0."""
    av = value_of(a)
    axes = _normalize_axis(axis, av.ndim)
    out = np.sqrt((av * av).sum(axis=axes, keepdims=keepdims))

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        g_full = _expand_to(g, av.shape, axes, keepdims)
        n_full = _expand_to(out, av.shape, axes, keepdims)
        safe = np.where(n_full > 0.0, n_full, 1.0)
        return (np.where(n_full > 0.0, g_full * av / safe, 0.0),)

    return _emit("norm", (a,), out, vjp)


# linear algebra

def matmul(a: ArrayLike, b: ArrayLike) -> Any:
    """Matrix-matrix or matrix-vector product of 2-D (and 1-D) operands."""
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {av.shape} by {bv.shape}")
    out = av @ bv

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if bv.ndim == 1:
            return np.outer(g, bv), av.T @ g
        return g @ bv.T, av.T @ g

    return _emit("matmul", (a, b), out, vjp)


def solve(a: ArrayLike, b: ArrayLike) -> Any:
    """Batched linear solve ``a x = b`` for a of shape (..., n, n), b of shape (..., n)."""
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or av.shape[-1] != av.shape[-2] or bv.shape != av.shape[:-1]:
        raise ShapeError(f"solve: incompatible shapes {av.shape} and {bv.shape}")
    out = np.linalg.solve(av, bv[..., None])[..., 0]

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        lam = np.linalg.solve(np.swapaxes(av, -1, -2), g[..., None])[..., 0]
        return -lam[..., :, None] * out[..., None, :], lam

    return _emit("solve", (a, b), out, vjp)


# structural ops

def reshape(a: ArrayLike, shape: Sequence[int]) -> Any:
    av = value_of(a)
    try:
        out = av.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {av.shape} to {tuple(shape)}") from exc
    return _emit("reshape", (a,), out, lambda g: (g.reshape(av.shape),))


def transpose(a: ArrayLike, axes: Sequence[int]) -> Any:
    av = value_of(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _emit("transpose", (a,), np.transpose(av, axes), lambda g: (np.transpose(g, inverse),))


def getitem(a: ArrayLike, index: Any) -> Any:
    """Slicing and integer-array gathering; the adjoint scatters with accumulation."""
    av = value_of(a)
    try:
        out = av[index]
    except IndexError as exc:
        raise ShapeError(f"slice: bad index for shape {av.shape}") from exc

    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(p, (np.ndarray, list)) for p in parts)

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros(av.shape)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _emit("slice", (a,), np.array(out, dtype=np.float64), vjp)


def concatenate(parts: Sequence[ArrayLike], axis: int = 0) -> Any:
    values = [value_of(p) for p in parts]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concatenate: {[v.shape for v in values]} along axis {axis}") from exc
    bounds = np.cumsum([v.shape[axis] for v in values])[:-1]
    return _emit("concatenate", tuple(parts), out, lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack(parts: Sequence[ArrayLike], axis: int = 0) -> Any:
    values = [value_of(p) for p in parts]
    try:
        out = np.stack(values, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: {[v.shape for v in values]}") from exc
    ax = axis % out.ndim

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, ...]:
        return tuple(np.take(g, i, axis=ax) for i in range(len(values)))

    return _emit("stack", tuple(parts), out, vjp)


OPS: Dict[str, Callable[..., Any]] = {
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "divide": divide,
    "scale": scale,
    "power": power,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "swish": swish,
    "abs": abs_,
    "matmul": matmul,
    "sum": sum_,
    "mean": mean,
    "norm": norm,
    "arcsin": arcsin,
    "maximum": maximum,
    "concatenate": concatenate,
    "slice": getitem,
    "solve": solve,
    "reshape": reshape,
    "transpose": transpose,
    "stack": stack,
}
