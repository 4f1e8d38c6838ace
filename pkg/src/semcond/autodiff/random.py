"""Seeded randomness. Streams are numpy PCG64 generators."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for ``seed``; extra integers select an independent child stream."""
    return np.random.default_rng([int(seed) & (2**64 - 1), *stream])


def sample_gaussian(rng: np.random.Generator, n: int, dim: int) -> Tensor:
    if n < 1 or dim < 1:
        raise ValueError(f"n and dim must be >= 1, got {n}, {dim}")
    return Tensor(rng.standard_normal((n, dim)))
