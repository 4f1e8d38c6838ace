"""Dense tensors on a recording tape with reverse-mode differentiation.

Every vector-Jacobian product is itself written in terms of the ops in this
module, so a gradient computed with ``create_graph=True`` is an ordinary
node on the tape and can be differentiated again (double backward).
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import NonFiniteError, ShapeError

VjpFn = Callable[["Tensor"], Sequence["Tensor | None"]]


class Graph:
    """Append-only tape. Creation order of ``nodes`` is a topological order."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self.recording = True
        self._watched: dict[int, tuple[object, list[Tensor]]] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node: object) -> bool:
        return isinstance(node, Tensor) and node.graph is self and node.index is not None

    def leaf(self, value, requires_grad: bool = True) -> "Tensor":
        t = Tensor(value)
        if requires_grad:
            t.requires_grad = True
            self._append(t)
        return t

    def watch(self, params) -> list["Tensor"]:
        """Return (and cache) differentiable leaves for every array of ``params``."""
        key = id(params)
        hit = self._watched.get(key)
        if hit is not None and hit[0] is params:
            return hit[1]
        leaves = [self.leaf(a) for a in params.arrays()]
        self._watched[key] = (params, leaves)
        return leaves

    def _append(self, t: "Tensor") -> None:
        t.graph = self
        t.index = len(self.nodes)
        self.nodes.append(t)


class Tensor:
    __slots__ = ("value", "graph", "index", "parents", "vjp", "op", "requires_grad")
    __array_priority__ = 1000

    def __init__(self, value, op: str = "const") -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.graph: Graph | None = None
        self.index: int | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.vjp: VjpFn | None = None
        self.op = op
        self.requires_grad = False

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

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

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value: np.ndarray, parents: Sequence[Tensor], vjp: VjpFn, op: str) -> Tensor:
    # NaN and Inf both propagate through a sum, so one reduction checks every entry
    if not math.isfinite(np.add.reduce(value, axis=None)):
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite value produced by op '{op}'")
    out = Tensor(value, op)
    graph = None
    for p in parents:
        if p.requires_grad and p.graph is not None:
            graph = p.graph
            break
    if graph is not None and graph.recording:
        out.parents = tuple(parents)
        out.vjp = vjp
        out.requires_grad = True
        graph._append(out)
    return out


def _sum_to_shape(a: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if a.shape == shape:
        return a
    lead = a.ndim - len(shape)
    if lead < 0:
        raise ShapeError(f"cannot reduce {a.shape} to {shape}")
    axes = tuple(range(lead)) + tuple(
        lead + i for i, n in enumerate(shape) if n == 1 and a.shape[lead + i] != 1
    )
    return a.sum(axis=axes, keepdims=True).reshape(shape)


# --- elementwise -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.value + b.value,
        (a, b),
        lambda g: (sum_to(g, a.shape), sum_to(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.value - b.value,
        (a, b),
        lambda g: (sum_to(g, a.shape), sum_to(neg(g), b.shape)),
        "sub",
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.value, (a,), lambda g: (neg(g),), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def vjp(g):
        ga = sum_to(mul(g, b), a.shape) if a.requires_grad else None
        gb = sum_to(mul(g, a), b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.value * b.value, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.value == 0):
        raise NonFiniteError("division by zero")

    def vjp(g):
        ga = sum_to(div(g, b), a.shape) if a.requires_grad else None
        gb = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.value / b.value, (a, b), vjp, "div")


def square(a) -> Tensor:
    return mul(a, a)


def exp(a) -> Tensor:
    a = as_tensor(a)
    holder: list[Tensor] = []
    out = _node(np.exp(a.value), (a,), lambda g: (mul(g, holder[0]),), "exp")
    holder.append(out)
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise NonFiniteError("log of non-positive value")
    return _node(np.log(a.value), (a,), lambda g: (div(g, a),), "log")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.value > 0, 1.0, slope)
    # piecewise linear: the slope mask is a constant of the graph
    return _node(a.value * scale, (a,), lambda g: (mul(g, scale),), "leaky_relu")


# --- shape ----------------------------------------------------------------


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    value = a.value.sum(axis=axis, keepdims=keepdims)
    kept = a.value.sum(axis=axis, keepdims=True).shape

    def vjp(g):
        return (broadcast_to(reshape(g, kept), a.shape),)

    return _node(np.asarray(value), (a,), vjp, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _node(a.value.reshape(shape), (a,), lambda g: (reshape(g, a.shape),), "reshape")


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _node(
        np.broadcast_to(a.value, shape).copy(),
        (a,),
        lambda g: (sum_to(g, a.shape),),
        "broadcast_to",
    )


def sum_to(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a
    return _node(
        _sum_to_shape(a.value, shape), (a,), lambda g: (broadcast_to(g, a.shape),), "sum_to"
    )


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.value.T.copy(), (a,), lambda g: (transpose(g),), "transpose")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not chain")

    def vjp(g):
        ga = matmul(g, transpose(b)) if a.requires_grad else None
        gb = matmul(transpose(a), g) if b.requires_grad else None
        return ga, gb

    return _node(a.value @ b.value, (a, b), vjp, "matmul")


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    total = a.shape[-1]
    return _node(
        a.value[..., start:stop].copy(),
        (a,),
        lambda g: (pad_cols(g, start, total),),
        "slice_cols",
    )


def pad_cols(a, start: int, total: int) -> Tensor:
    a = as_tensor(a)
    width = a.shape[-1]
    value = np.zeros(a.shape[:-1] + (total,))
    value[..., start : start + width] = a.value
    return _node(value, (a,), lambda g: (slice_cols(g, start, start + width),), "pad_cols")


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if axis not in (-1, ts[0].value.ndim - 1):
        raise ShapeError("concat is supported along the last axis only")
    bounds = np.cumsum([0] + [t.shape[-1] for t in ts])

    def vjp(g):
        return tuple(slice_cols(g, int(bounds[i]), int(bounds[i + 1])) for i in range(len(ts)))

    return _node(np.concatenate([t.value for t in ts], axis=-1), ts, vjp, "concat")


# --- fused / composite -----------------------------------------------------


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` stored as (out, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"input width {x.shape[-1]} != layer in-dimension {weight.shape[1]}")
    value = x.value @ weight.value.T
    parents: tuple[Tensor, ...] = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        value = value + bias.value
        parents = (x, weight, bias)

    def vjp(g):
        gx = matmul(g, weight) if x.requires_grad else None
        gw = matmul(transpose(g), x) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        gb = sum_(g, axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _node(value, parents, vjp, "linear")


def row_norm(a) -> Tensor:
    """Euclidean norm of each row, shape (N, 1). The gradient at a zero row is zero."""
    a = as_tensor(a)
    norms = np.sqrt((a.value * a.value).sum(axis=-1, keepdims=True))
    holder: list[Tensor] = []

    def vjp(g):
        out = holder[0]
        safe = add(out, (out.value == 0).astype(np.float64))
        return (mul(div(g, safe), a),)

    out = _node(norms, (a,), vjp, "row_norm")
    holder.append(out)
    return out


def log_softmax(a) -> Tensor:
    a = as_tensor(a)
    # the shift is exact for any constant, so it stays off the tape
    shifted = sub(a, a.value.max(axis=-1, keepdims=True))
    return sub(shifted, log(sum_(exp(shifted), axis=-1, keepdims=True)))


# --- differentiation -------------------------------------------------------


def backward(
    graph: Graph,
    output: Tensor,
    wrt: Sequence[Tensor],
    create_graph: bool = False,
) -> list[Tensor]:
    """Gradients of scalar ``output`` with respect to each node in ``wrt``.

    With ``create_graph`` the gradient computation is appended to ``graph``
    so the returned tensors can be differentiated again.
    """
    if output.size != 1:
        raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
    for n in wrt:
        if n not in graph:
            raise ValueError("node not in graph")
    zeros = [Tensor(np.zeros(n.shape)) for n in wrt]
    if output not in graph:
        return zeros

    grads: dict[int, Tensor] = {output.index: Tensor(np.ones(output.shape))}
    was_recording = graph.recording
    graph.recording = create_graph
    try:
        for node in reversed(graph.nodes[: output.index + 1]):
            g = grads.get(node.index)
            if g is None or node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                if pg is None or parent.index is None or parent.graph is not graph:
                    continue
                prev = grads.get(parent.index)
                grads[parent.index] = pg if prev is None else add(prev, pg)
    finally:
        graph.recording = was_recording
    return [grads.get(n.index, z) for n, z in zip(wrt, zeros)]
