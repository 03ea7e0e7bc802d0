"""Reverse-mode automatic differentiation on dense float64 arrays.

A ``Tape`` records every operation as a ``Node`` with a strictly increasing
id, so replaying the node list in reverse is a valid topological order for
backpropagation.  ``Tensor`` is a lightweight handle (tape plus node id) with
operator sugar; the actual op implementations live in module-level functions.

Design constraints honoured here:

* all values are float64 end to end; complex quantities are carried as a
  trailing re/im axis of size 2 by the callers,
* elementwise binaries follow standard broadcasting (a size-1 axis
  stretches), and gradients are summed back over broadcast axes,
* ``matmul`` contracts the trailing feature axis of the input with a rank-2
  weight, so one weight matrix applies across any leading index structure,
* domain-restricted ops (``div``, ``sqrt``, ``log2_1p``) reject operands that
  would produce non-finite values from finite inputs,
* ``ste_gate`` applies a hard threshold mask in the forward pass but passes
  gradients through unchanged (straight-through estimator), which is what
  makes learned pruning trainable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, GraphError, ShapeMismatchError

_LN2 = math.log(2.0)


@dataclass(slots=True)
class Node:
    uid: int
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    ctx: tuple = ()
    trainable: bool = False
    name: str | None = None


class Tensor:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "uid")

    def __init__(self, tape: "Tape", uid: int):
        self.tape = tape
        self.uid = uid

    @property
    def node(self) -> Node:
        return self.tape.nodes[self.uid]

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.node.value.shape

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(uid={self.uid}, op={self.node.op!r}, shape={self.shape})"

    def __add__(self, other):
        return add(self, _lift(self.tape, other))

    def __radd__(self, other):
        return add(_lift(self.tape, other), self)

    def __sub__(self, other):
        return sub(self, _lift(self.tape, other))

    def __rsub__(self, other):
        return sub(_lift(self.tape, other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _lift(self.tape, other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return div(self, _lift(self.tape, other))

    def __matmul__(self, other):
        return matmul(self, _lift(self.tape, other))

    def __neg__(self):
        return scale(self, -1.0)


class Gradients:
    """Result of a backward pass: gradient per trainable leaf.

    Leaves that did not influence the loss get explicit zero gradients.
    """

    def __init__(self, by_uid: dict[int, np.ndarray]):
        self._by_uid = by_uid

    def __getitem__(self, leaf: Tensor) -> np.ndarray:
        try:
            return self._by_uid[leaf.uid]
        except KeyError:
            raise GraphError(
                f"node {leaf.uid} is not a trainable leaf of this tape"
            ) from None

    def __len__(self) -> int:
        return len(self._by_uid)


class Tape:
    """Append-only operation record supporting one or more backward passes."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._trainable_uids: list[int] = []

    def _record(
        self,
        op: str,
        parents: tuple[int, ...],
        value: np.ndarray,
        ctx: tuple = (),
        trainable: bool = False,
        name: str | None = None,
    ) -> Tensor:
        uid = len(self.nodes)
        self.nodes.append(Node(uid, op, parents, value, ctx, trainable, name))
        if trainable:
            self._trainable_uids.append(uid)
        return Tensor(self, uid)

    def leaf(self, value, trainable: bool = False, name: str | None = None) -> Tensor:
        if np.iscomplexobj(value):
            raise DomainError("leaf values must be real; split re/im into a trailing axis")
        arr = np.asarray(value, dtype=np.float64)
        return self._record("leaf", (), arr, trainable=trainable, name=name)

    def constant(self, value, name: str | None = None) -> Tensor:
        return self.leaf(value, trainable=False, name=name)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, out: Tensor) -> Gradients:
        """Backpropagate from a scalar output to every trainable leaf."""
        if out.tape is not self:
            raise GraphError("output tensor does not belong to this tape")
        if out.value.size != 1:
            raise GraphError(
                f"backward requires a scalar output, got shape {out.value.shape}"
            )

        # Restrict the sweep to ancestors of the output.
        needed: set[int] = set()
        stack = [out.uid]
        while stack:
            uid = stack.pop()
            if uid in needed:
                continue
            needed.add(uid)
            stack.extend(self.nodes[uid].parents)

        grads: dict[int, np.ndarray] = {out.uid: np.ones_like(out.value)}
        result: dict[int, np.ndarray] = {}
        for uid in sorted(needed, reverse=True):
            g = grads.pop(uid, None)
            if g is None:
                continue
            node = self.nodes[uid]
            if node.op == "leaf":
                if node.trainable:
                    result[uid] = np.ascontiguousarray(g)
                continue
            for pid, pg in zip(node.parents, _BACKWARD[node.op](node, g, self)):
                if pg is None:
                    continue
                prev = grads.get(pid)
                # Accumulation always allocates so no upstream buffer is
                # mutated while other consumers still hold it.
                grads[pid] = pg if prev is None else prev + pg

        for uid in self._trainable_uids:
            if uid not in result:
                result[uid] = np.zeros_like(self.nodes[uid].value)
        return Gradients(result)


def _lift(tape: Tape, value) -> Tensor:
    if isinstance(value, Tensor):
        if value.tape is not tape:
            raise GraphError("operands live on different tapes")
        return value
    return tape.constant(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squeeze = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if squeeze:
        grad = grad.sum(axis=squeeze, keepdims=True)
    return grad


def _binary_value(op: str, a: Tensor, b: Tensor) -> None:
    if a.tape is not b.tape:
        raise GraphError(f"{op}: operands live on different tapes")
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(
            f"{op}: shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_value("add", a, b)
    return a.tape._record("add", (a.uid, b.uid), a.value + b.value)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_value("sub", a, b)
    return a.tape._record("sub", (a.uid, b.uid), a.value - b.value)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_value("mul", a, b)
    return a.tape._record("mul", (a.uid, b.uid), a.value * b.value)


def div(a: Tensor, b: Tensor) -> Tensor:
    _binary_value("div", a, b)
    if np.any(b.value == 0.0):
        raise DomainError("div: denominator contains zeros")
    return a.tape._record("div", (a.uid, b.uid), a.value / b.value)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """Contract the trailing axis of ``x`` with a rank-2 weight ``w``."""
    if x.tape is not w.tape:
        raise GraphError("matmul: operands live on different tapes")
    if w.value.ndim != 2:
        raise ShapeMismatchError(f"matmul: weight must be rank 2, got {w.shape}")
    if x.value.ndim < 1 or x.shape[-1] != w.shape[0]:
        raise ShapeMismatchError(
            f"matmul: trailing axis of {x.shape} does not match weight {w.shape}"
        )
    return x.tape._record("matmul", (x.uid, w.uid), np.matmul(x.value, w.value))


def reduce_sum(x: Tensor, axis: int | tuple[int, ...], keepdims: bool = False) -> Tensor:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    for ax in axes:
        if not -x.value.ndim <= ax < x.value.ndim:
            raise ShapeMismatchError(f"reduce_sum: axis {ax} out of range for {x.shape}")
    axes = tuple(sorted(ax % x.value.ndim for ax in axes))
    value = x.value.sum(axis=axes, keepdims=keepdims)
    return x.tape._record("reduce_sum", (x.uid,), value, ctx=(axes, keepdims))


def sigmoid(x: Tensor) -> Tensor:
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return x.tape._record("sigmoid", (x.uid,), out)


def relu(x: Tensor) -> Tensor:
    return x.tape._record("relu", (x.uid,), np.maximum(x.value, 0.0))


def square(x: Tensor) -> Tensor:
    return x.tape._record("square", (x.uid,), np.square(x.value))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.value < 0.0):
        raise DomainError("sqrt: negative operand")
    return x.tape._record("sqrt", (x.uid,), np.sqrt(x.value))


def log2_1p(x: Tensor) -> Tensor:
    """log2(1 + x), restricted to x >= 0 (rates of nonnegative ratios)."""
    if np.any(x.value < 0.0):
        raise DomainError("log2_1p: operand below zero")
    return x.tape._record("log2_1p", (x.uid,), np.log1p(x.value) / _LN2)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        value = np.broadcast_to(x.value, shape)
    except ValueError:
        raise ShapeMismatchError(
            f"broadcast_to: cannot broadcast {x.shape} to {shape}"
        ) from None
    return x.tape._record("broadcast", (x.uid,), value, ctx=(x.shape,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        value = x.value.reshape(shape)
    except ValueError:
        raise ShapeMismatchError(
            f"reshape: cannot reshape {x.shape} to {shape}"
        ) from None
    return x.tape._record("reshape", (x.uid,), value, ctx=(x.shape,))


def concat(parts: Iterable[Tensor], axis: int) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeMismatchError("concat: no operands")
    tape = parts[0].tape
    for p in parts:
        _lift(tape, p)
    shapes = [p.shape for p in parts]
    ndim = parts[0].value.ndim
    axis = axis % ndim
    for s in shapes[1:]:
        if len(s) != ndim or any(i != axis and s[i] != shapes[0][i] for i in range(ndim)):
            raise ShapeMismatchError(f"concat: incompatible shapes {shapes}")
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = tuple(s[axis] for s in shapes)
    return tape._record("concat", tuple(p.uid for p in parts), value, ctx=(axis, sizes))


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Slice [start, stop) along one axis."""
    axis = axis % x.value.ndim
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeMismatchError(
            f"narrow: [{start}, {stop}) out of bounds for axis {axis} of {x.shape}"
        )
    index = [slice(None)] * x.value.ndim
    index[axis] = slice(start, stop)
    value = x.value[tuple(index)]
    return x.tape._record("narrow", (x.uid,), value, ctx=(axis, start, stop))


def scale(x: Tensor, c: float) -> Tensor:
    return x.tape._record("scale", (x.uid,), x.value * c, ctx=(float(c),))


def ste_gate(a: Tensor, threshold: float) -> Tensor:
    """Hard-threshold mask with a straight-through gradient.

    Forward: a * (a > threshold).  Backward: the incoming gradient passes to
    ``a`` unchanged, as if the mask were the identity.
    """
    mask = a.value > threshold
    return a.tape._record("ste_gate", (a.uid,), a.value * mask, ctx=(float(threshold), mask))


def _bw_add(node: Node, g: np.ndarray, tape: Tape):
    a, b = (tape.nodes[p] for p in node.parents)
    return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)


def _bw_sub(node: Node, g: np.ndarray, tape: Tape):
    a, b = (tape.nodes[p] for p in node.parents)
    return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)


def _bw_mul(node: Node, g: np.ndarray, tape: Tape):
    a, b = (tape.nodes[p] for p in node.parents)
    return (
        _unbroadcast(g * b.value, a.value.shape),
        _unbroadcast(g * a.value, b.value.shape),
    )


def _bw_div(node: Node, g: np.ndarray, tape: Tape):
    a, b = (tape.nodes[p] for p in node.parents)
    ga = _unbroadcast(g / b.value, a.value.shape)
    gb = _unbroadcast(-g * node.value / b.value, b.value.shape)
    return ga, gb


def _bw_matmul(node: Node, g: np.ndarray, tape: Tape):
    x, w = (tape.nodes[p] for p in node.parents)
    gx = np.matmul(g, w.value.T)
    k, n = w.value.shape
    gw = np.matmul(x.value.reshape(-1, k).T, g.reshape(-1, n))
    return gx, gw


def _bw_reduce_sum(node: Node, g: np.ndarray, tape: Tape):
    (x,) = (tape.nodes[p] for p in node.parents)
    axes, keepdims = node.ctx
    if not keepdims:
        g = np.expand_dims(g, axes)
    return (np.broadcast_to(g, x.value.shape),)


def _bw_sigmoid(node: Node, g: np.ndarray, tape: Tape):
    y = node.value
    return (g * y * (1.0 - y),)


def _bw_relu(node: Node, g: np.ndarray, tape: Tape):
    (x,) = (tape.nodes[p] for p in node.parents)
    return (g * (x.value > 0.0),)


def _bw_square(node: Node, g: np.ndarray, tape: Tape):
    (x,) = (tape.nodes[p] for p in node.parents)
    return (g * (2.0 * x.value),)


def _bw_sqrt(node: Node, g: np.ndarray, tape: Tape):
    # Subgradient 0 at exactly zero to keep guarded heads finite.
    y = node.value
    out = np.zeros_like(g)
    np.divide(g, 2.0 * y, out=out, where=y > 0.0)
    return (out,)


def _bw_log2_1p(node: Node, g: np.ndarray, tape: Tape):
    (x,) = (tape.nodes[p] for p in node.parents)
    return (g / ((1.0 + x.value) * _LN2),)


def _bw_broadcast(node: Node, g: np.ndarray, tape: Tape):
    (orig_shape,) = node.ctx
    return (_unbroadcast(g, orig_shape),)


def _bw_reshape(node: Node, g: np.ndarray, tape: Tape):
    (orig_shape,) = node.ctx
    return (g.reshape(orig_shape),)


def _bw_concat(node: Node, g: np.ndarray, tape: Tape):
    axis, sizes = node.ctx
    offsets = np.cumsum((0,) + sizes)
    index = [slice(None)] * g.ndim
    outs = []
    for start, stop in zip(offsets[:-1], offsets[1:]):
        index[axis] = slice(start, stop)
        outs.append(g[tuple(index)])
    return tuple(outs)


def _bw_narrow(node: Node, g: np.ndarray, tape: Tape):
    (x,) = (tape.nodes[p] for p in node.parents)
    axis, start, stop = node.ctx
    out = np.zeros_like(x.value)
    index = [slice(None)] * out.ndim
    index[axis] = slice(start, stop)
    out[tuple(index)] = g
    return (out,)


def _bw_scale(node: Node, g: np.ndarray, tape: Tape):
    (c,) = node.ctx
    return (g * c,)


def _bw_ste_gate(node: Node, g: np.ndarray, tape: Tape):
    return (g,)


_BACKWARD = {
    "add": _bw_add,
    "sub": _bw_sub,
    "mul": _bw_mul,
    "div": _bw_div,
    "matmul": _bw_matmul,
    "reduce_sum": _bw_reduce_sum,
    "sigmoid": _bw_sigmoid,
    "relu": _bw_relu,
    "square": _bw_square,
    "sqrt": _bw_sqrt,
    "log2_1p": _bw_log2_1p,
    "broadcast": _bw_broadcast,
    "reshape": _bw_reshape,
    "concat": _bw_concat,
    "narrow": _bw_narrow,
    "scale": _bw_scale,
    "ste_gate": _bw_ste_gate,
}
