"""Gaussian-mixture feature worlds with a known Bayes decision rule.

A world places one isotropic Gaussian per class in feature space. Semantic
vectors are either the class means themselves (zero-padded or truncated to
the semantic width) or independent random vectors. Because the generating
densities are known, the Bayes classifier gives an accuracy ceiling for any
learned model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import make_rng
from .datamodel import ClassCatalog, LabeledFeatureSet, PipelineConfig, SemanticTable, SplitSpec, merge_config

ALIGNMENTS = ("mean", "random")


@dataclass(frozen=True, eq=False)
class WorldSpec:
    means: np.ndarray
    stds: np.ndarray
    semantic_dim: int
    samples_per_class: int
    seed: int = 0
    alignment: str = "mean"
    names: tuple[str, ...] | None = None
    unseen: tuple[int, ...] = ()

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        stds = np.broadcast_to(np.asarray(self.stds, dtype=np.float64), (len(means),)).copy()
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)
        if self.names is None:
            object.__setattr__(self, "names", tuple(f"class{c}" for c in range(len(means))))
        object.__setattr__(self, "unseen", tuple(sorted(int(c) for c in self.unseen)))
        if len(means) < 2:
            raise ValueError("a world needs at least two classes")
        if np.any(stds <= 0) or not np.all(np.isfinite(stds)):
            raise ValueError("class stds must be positive")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be >= 1")
        if self.semantic_dim < 1:
            raise ValueError("semantic_dim must be >= 1")
        if self.alignment not in ALIGNMENTS:
            raise ValueError(f"alignment must be one of {ALIGNMENTS}")
        if len(self.names) != len(means):
            raise ValueError("one name per class")
        if any(not 0 <= c < len(means) for c in self.unseen):
            raise ValueError("unseen id out of range")

    @property
    def n_classes(self) -> int:
        return len(self.means)

    @property
    def feature_dim(self) -> int:
        return self.means.shape[1]

    def catalog(self) -> ClassCatalog:
        return ClassCatalog(tuple(self.names))

    def split(self) -> SplitSpec:
        unseen = {self.names[c] for c in self.unseen}
        return SplitSpec(frozenset(set(self.names) - unseen), frozenset(unseen))

    def with_(self, **changes) -> "WorldSpec":
        fields = dict(
            means=self.means, stds=self.stds, semantic_dim=self.semantic_dim,
            samples_per_class=self.samples_per_class, seed=self.seed,
            alignment=self.alignment, names=self.names, unseen=self.unseen,
        )
        fields.update(changes)
        return WorldSpec(**fields)


def _embed(means: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((len(means), dim))
    k = min(dim, means.shape[1])
    out[:, :k] = means[:, :k]
    return out


def semantic_vectors(spec: WorldSpec) -> np.ndarray:
    if spec.alignment == "mean":
        return _embed(spec.means, spec.semantic_dim)
    return make_rng(spec.seed, 1).standard_normal((spec.n_classes, spec.semantic_dim))


def sample_world(spec: WorldSpec, samples_per_class: int, seed: int) -> LabeledFeatureSet:
    """Class-ordered draws of ``samples_per_class`` points per class."""
    rng = make_rng(seed, 0)
    n, b = samples_per_class, spec.feature_dim
    noise = rng.standard_normal((spec.n_classes, n, b))
    feats = spec.means[:, None, :] + spec.stds[:, None, None] * noise
    labels = np.repeat(np.arange(spec.n_classes), n)
    return LabeledFeatureSet(feats.reshape(-1, b), labels, spec.catalog())


def make_world(spec: WorldSpec) -> tuple[LabeledFeatureSet, SemanticTable, ClassCatalog]:
    fs = sample_world(spec, spec.samples_per_class, spec.seed)
    emb = semantic_vectors(spec)
    table = SemanticTable({name: emb[c] for c, name in enumerate(spec.names)}, spec.semantic_dim)
    return fs, table, fs.catalog


def draw_test_set(spec: WorldSpec, samples_per_class: int | None = None) -> LabeledFeatureSet:
    """An independent draw from the same world (a different seed stream)."""
    n = spec.samples_per_class if samples_per_class is None else samples_per_class
    return sample_world(spec, n, spec.seed ^ 0x5EED_7E57)


def log_likelihoods(spec: WorldSpec, x) -> np.ndarray:
    """(N, C) exact Gaussian log densities up to a shared constant."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != spec.feature_dim:
        raise ValueError(f"x has dim {x.shape[1]}, world has {spec.feature_dim}")
    sq = ((x[:, None, :] - spec.means[None, :, :]) ** 2).sum(axis=-1)
    return -spec.feature_dim * np.log(spec.stds)[None, :] - sq / (2.0 * spec.stds[None, :] ** 2)


def bayes_oracle(spec: WorldSpec, x, labels=None) -> np.ndarray:
    """Equal-prior maximum-likelihood class over ``labels`` (all classes by default).

    Ties go to the lower id.
    """
    ll = log_likelihoods(spec, x)
    ids = np.arange(spec.n_classes) if labels is None else np.asarray(sorted(int(c) for c in labels))
    return ids[np.argmax(ll[:, ids], axis=1)]


def oracle_accuracy(spec: WorldSpec, fs: LabeledFeatureSet, labels=None, per_class: bool = False) -> float:
    """Bayes-rule accuracy on ``fs`` in percent.

    With ``labels`` the rule and the points are both restricted to that label
    space. ``per_class`` returns the unweighted mean of per-class accuracies.
    """
    if labels is not None:
        fs = fs.restrict(labels)
    if len(fs) == 0:
        raise ValueError("no points to score")
    pred = bayes_oracle(spec, fs.features, labels)
    hit = pred == fs.labels
    if not per_class:
        return 100.0 * float(hit.mean())
    return 100.0 * float(np.mean([hit[fs.labels == c].mean() for c in np.unique(fs.labels)]))


# --- named worlds -------------------------------------------------------------------


def _orthonormal(rng: np.random.Generator, dim: int, k: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, k)))
    return q * np.sign(np.diag(r))


def simplex_means(n: int, dim: int, distance: float, seed: int = 0) -> np.ndarray:
    """``n`` centered regular-simplex vertices with the given pairwise distance."""
    if dim < n - 1:
        raise ValueError("simplex needs dim >= n - 1")
    verts = np.eye(n) - 1.0 / n
    verts *= distance / np.sqrt(2.0)
    # rows of verts span an (n-1)-dim subspace of R^n; rotate it into R^dim
    u, _, _ = np.linalg.svd(verts.T @ verts)
    coords = verts @ u[:, : n - 1]
    basis = _orthonormal(make_rng(seed, 2), dim, n - 1)
    return coords @ basis.T


def simplex_world(seed: int = 0, samples_per_class: int = 2000) -> WorldSpec:
    """6 classes on a regular simplex (pairwise distance 6), 4 seen / 2 unseen."""
    return WorldSpec(
        means=simplex_means(6, 16, 6.0, seed),
        stds=np.ones(6),
        semantic_dim=16,
        samples_per_class=samples_per_class,
        seed=seed,
        unseen=(4, 5),
    )


PLANAR_NAMES = ("south_west", "south_east", "north_west", "north_east", "north", "south")


def planar_world(
    seed: int = 0,
    samples_per_class: int = 2000,
    half_side: float = 6.0,
    unseen_offset: float | None = None,
    std: float = 1.0,
) -> WorldSpec:
    """Seen classes at the corners of a square, unseen classes on its vertical axis.

    The square has corners (+-half_side, +-half_side) in a randomly oriented
    plane of R^16. The unseen classes sit at (0, +-unseen_offset), which
    defaults to the midpoints of the top and bottom edges. Their semantics
    therefore lie in the affine hull of the seen semantics.
    """
    s = float(half_side)
    u = s if unseen_offset is None else float(unseen_offset)
    coords = np.array([[-s, -s], [s, -s], [-s, s], [s, s], [0.0, u], [0.0, -u]])
    basis = _orthonormal(make_rng(seed, 3), 16, 2)
    return WorldSpec(
        means=coords @ basis.T,
        stds=np.full(6, std),
        semantic_dim=16,
        samples_per_class=samples_per_class,
        seed=seed,
        names=PLANAR_NAMES,
        unseen=(4, 5),
    )


def default_world(seed: int = 0, samples_per_class: int = 2000) -> WorldSpec:
    return planar_world(seed, samples_per_class)


def overlap_world(seed: int = 0, samples_per_class: int = 2000) -> WorldSpec:
    """Two overlapping unseen classes inside the seen square, away from its edges."""
    return planar_world(seed, samples_per_class, half_side=4.0, unseen_offset=1.5)


WORLDS = {"default": default_world, "planar": planar_world, "simplex": simplex_world, "overlap": overlap_world}


# Training settings sized for 16-dimensional worlds on a single CPU. The GAN keeps
# the default epochs, batch, learning rate and penalty weight.
DESK_CONFIG = {
    "gan": {
        "noise_dim": 16,
        "generator_hidden": [64],
        "critic_hidden": [128],
        "beta1": 0.5,
        "beta2": 0.9,
    },
    "classifier": {"epochs": 5, "batch": 256, "lr": 0.001, "hidden": [64]},
}


def desk_config(seed: int = 0, **overrides) -> PipelineConfig:
    """Desk-scale pipeline config; ``overrides`` are extra config sections."""
    config = merge_config(PipelineConfig(seed=seed), DESK_CONFIG)
    return merge_config(config, overrides) if overrides else config
