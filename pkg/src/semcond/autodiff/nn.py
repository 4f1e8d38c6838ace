"""Fully-connected networks evaluated on a :class:`Graph`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteError, ShapeError
from . import tensor as T
from .tensor import Graph, Tensor

ACTIVATIONS = ("leaky_relu", "identity")


@dataclass
class MlpParams:
    """Weights are stored (out, in); one activation name per layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    slope: float = 0.2

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ShapeError("weights, biases and activations must have equal length")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"layer {i} in-dimension does not chain")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteError(f"layer {i} holds non-finite parameters")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [w.shape[0] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_arrays(self, arrays) -> "MlpParams":
        arrays = list(arrays)
        return MlpParams(arrays[0::2], arrays[1::2], list(self.activations), self.slope)

    def copy(self) -> "MlpParams":
        return self.with_arrays(a.copy() for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def from_flat(self, flat: np.ndarray) -> "MlpParams":
        out, pos = [], 0
        for a in self.arrays():
            out.append(np.asarray(flat[pos : pos + a.size], dtype=np.float64).reshape(a.shape))
            pos += a.size
        if pos != len(flat):
            raise ShapeError(f"flat payload has {len(flat)} values, expected {pos}")
        return self.with_arrays(out)

    def equals(self, other: "MlpParams") -> bool:
        mine, theirs = self.arrays(), other.arrays()
        return len(mine) == len(theirs) and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(mine, theirs)
        )


def init_mlp(
    sizes: list[int],
    rng: np.random.Generator,
    hidden: str = "leaky_relu",
    output: str = "identity",
    slope: float = 0.2,
) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    if len(sizes) < 2 or min(sizes) < 1:
        raise ShapeError(f"invalid layer sizes {sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    acts = [hidden] * (len(sizes) - 2) + [output]
    return MlpParams(weights, biases, acts, slope)


def mlp_forward(params: MlpParams, x, graph: Graph | None = None, track: bool = True) -> Tensor:
    """Evaluate the network. With ``track`` the parameters are watched leaves of ``graph``."""
    x = T.as_tensor(x)
    if x.shape[-1] != params.in_dim:
        raise ShapeError(f"input width {x.shape[-1]} != network in-dimension {params.in_dim}")
    if graph is not None and track:
        leaves = graph.watch(params)
    else:
        leaves = [T.Tensor(a) for a in params.arrays()]
    h = x
    for i, act in enumerate(params.activations):
        h = T.linear(h, leaves[2 * i], leaves[2 * i + 1])
        if act == "leaky_relu":
            h = T.leaky_relu(h, params.slope)
    return h


def mlp_apply(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Graph-free forward pass on plain arrays."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != params.in_dim:
        raise ShapeError(f"input width {h.shape[-1]} != network in-dimension {params.in_dim}")
    for w, b, act in zip(params.weights, params.biases, params.activations):
        h = h @ w.T + b
        if act == "leaky_relu":
            h = np.where(h > 0, h, params.slope * h)
    if not np.all(np.isfinite(h)):
        raise NonFiniteError("non-finite network output")
    return h


def input_gradient(params: MlpParams, x: Tensor, graph: Graph, cond=None) -> Tensor:
    """Differentiable gradient of a scalar-per-row network w.r.t. its input ``x``.

    ``cond`` is concatenated after ``x`` (the critic's semantic input) and is
    not differentiated. Each output row depends only on its own input row, so
    the gradient of the summed head gives every row's input gradient at once.
    """
    if params.out_dim != 1:
        raise ShapeError(f"input_gradient needs a scalar head, got width {params.out_dim}")
    if x not in graph:
        raise ValueError("input must be a differentiable node of the graph")
    inp = x if cond is None else T.concat([x, cond])
    out = mlp_forward(params, inp, graph)
    (grad,) = T.backward(graph, T.sum_(out), [x], create_graph=True)
    return grad
