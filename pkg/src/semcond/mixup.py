"""Feature-geometry mixup: interpolate samples toward geometrically adjacent classes.

Class centers are the per-class mean features. Two classes are adjacent when
their centers are close in Euclidean distance. Each synthesized pair mixes a
real sample with a sample from one of its class's ``neighbors`` closest
classes, and mixes their semantic vectors with the same coefficient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condgan import ConditionedFeatures
from .datamodel import LabeledFeatureSet, SemanticTable, class_embeddings
from .errors import FormatError


@dataclass(frozen=True, eq=False)
class ClassCenters:
    ids: tuple[int, ...]
    centers: np.ndarray
    counts: np.ndarray

    def center(self, class_id: int) -> np.ndarray:
        return self.centers[self.ids.index(class_id)]


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """Pairwise center distances; smaller means closer."""

    ids: tuple[int, ...]
    distances: np.ndarray


def class_centers(fs: LabeledFeatureSet) -> ClassCenters:
    ids = fs.present_classes()
    centers = np.stack([fs.features[fs.labels == c].mean(axis=0) for c in ids])
    counts = np.array([(fs.labels == c).sum() for c in ids])
    return ClassCenters(tuple(ids), centers, counts)


def similarity_matrix(centers: ClassCenters) -> SimilarityMatrix:
    if len(centers.ids) < 2:
        raise ValueError("need at least two classes")
    diff = centers.centers[:, None, :] - centers.centers[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    return SimilarityMatrix(centers.ids, dist)


def closest_classes(A: SimilarityMatrix, class_id: int, neighbors: int) -> list[int]:
    """The ``neighbors`` nearest other classes, ties broken by lower id."""
    if not 1 <= neighbors <= len(A.ids) - 1:
        raise ValueError(f"neighbors must be in [1, {len(A.ids) - 1}], got {neighbors}")
    row = A.distances[A.ids.index(class_id)]
    others = [(row[j], cid) for j, cid in enumerate(A.ids) if cid != class_id]
    return [cid for _, cid in sorted(others)[:neighbors]]


def synthesize_mixup(
    fs: LabeledFeatureSet,
    semantics: SemanticTable,
    neighbors: int,
    gamma: float,
    rng: np.random.Generator,
    beta: float | None = None,
) -> ConditionedFeatures:
    """Return ``floor(gamma * N)`` interpolated (feature, semantic) pairs.

    ``beta`` forces the interpolation coefficient; by default each pair draws
    its own from U(0, 1). The coefficients are kept on the result.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    count = int(np.floor(gamma * len(fs)))
    emb = class_embeddings(semantics, fs.catalog)
    if count == 0:
        return ConditionedFeatures.empty(fs.feature_dim, emb.shape[1])

    A = similarity_matrix(class_centers(fs))
    members = {c: np.flatnonzero(fs.labels == c) for c in A.ids}
    table = {c: closest_classes(A, c, neighbors) for c in A.ids}
    for c, nbrs in table.items():
        if any(len(members[n]) == 0 for n in nbrs):
            raise FormatError(f"empty neighbor class for class {c}")

    src = rng.integers(0, len(fs), size=count)
    src_cls = fs.labels[src]
    pick = rng.integers(0, neighbors, size=count)
    nbr_cls = np.array([table[c][k] for c, k in zip(src_cls, pick)], dtype=np.int64)
    u = rng.random(count)
    sizes = np.array([len(members[c]) for c in nbr_cls])
    nbr = np.array([members[c][k] for c, k in zip(nbr_cls, (u * sizes).astype(np.int64))])
    betas = rng.random(count) if beta is None else np.full(count, float(beta))

    bcol = betas[:, None]
    feats = bcol * fs.features[src] + (1 - bcol) * fs.features[nbr]
    sems = bcol * emb[src_cls] + (1 - bcol) * emb[nbr_cls]
    return ConditionedFeatures(
        feats, sems, src_cls, betas=betas, sources=np.stack([src, nbr], axis=1)
    )
