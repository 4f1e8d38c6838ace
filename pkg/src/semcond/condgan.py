"""Semantics-conditioned WGAN-GP over point features.

The generator maps ``[semantic, noise]`` to a feature vector; the critic
scores ``[feature, semantic]``. The critic objective is

    mean D(fake, e) - mean D(real, e) + lambda * mean (||grad_xhat D(xhat, e)|| - 1)^2

with ``xhat`` a per-sample random convex combination of real and fake.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Graph, MlpParams, adam_step, backward, init_mlp, input_gradient, mlp_apply, mlp_forward
from .autodiff import tensor as T
from .datamodel import GanConfig, LabeledFeatureSet, SemanticTable, class_embeddings
from .errors import FormatError, NonFiniteError, ShapeError

GAN_MAGIC = b"SCPG"
GAN_VERSION = 1


@dataclass(frozen=True, eq=False)
class ConditionedFeatures:
    """Rows of (feature, semantic) training pairs.

    ``groups`` is the class each row is sampled under for class-balanced
    batches: the label for real rows, the source class for mixup rows.
    """

    features: np.ndarray
    semantics: np.ndarray
    groups: np.ndarray
    betas: np.ndarray | None = None
    sources: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.features)
        if len(self.semantics) != n or len(self.groups) != n:
            raise ShapeError("features, semantics and groups must have equal length")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.semantics))):
            raise NonFiniteError("non-finite conditioned feature")

    def __len__(self) -> int:
        return len(self.features)

    @classmethod
    def empty(cls, feature_dim: int, semantic_dim: int) -> "ConditionedFeatures":
        return cls(np.zeros((0, feature_dim)), np.zeros((0, semantic_dim)), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_labeled(cls, fs: LabeledFeatureSet, semantics: SemanticTable) -> "ConditionedFeatures":
        emb = class_embeddings(semantics, fs.catalog)
        return cls(fs.features, emb[fs.labels], fs.labels.copy())

    def concat(self, other: "ConditionedFeatures") -> "ConditionedFeatures":
        return ConditionedFeatures(
            np.concatenate([self.features, other.features]),
            np.concatenate([self.semantics, other.semantics]),
            np.concatenate([self.groups, other.groups]),
        )


@dataclass
class CondGanModel:
    generator: MlpParams
    discriminator: MlpParams
    noise_dim: int
    feature_dim: int
    semantic_dim: int
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        g, d = self.generator, self.discriminator
        if g.in_dim != self.semantic_dim + self.noise_dim or g.out_dim != self.feature_dim:
            raise ShapeError("generator must map (semantic_dim + noise_dim) -> feature_dim")
        if d.in_dim != self.feature_dim + self.semantic_dim or d.out_dim != 1:
            raise ShapeError("discriminator must map (feature_dim + semantic_dim) -> 1")


def init_model(feature_dim: int, semantic_dim: int, config: GanConfig, rng: np.random.Generator) -> CondGanModel:
    gen = init_mlp([semantic_dim + config.noise_dim, *config.generator_hidden, feature_dim], rng)
    disc = init_mlp([feature_dim + semantic_dim, *config.critic_hidden, 1], rng)
    return CondGanModel(gen, disc, config.noise_dim, feature_dim, semantic_dim)


def _semantic_rows(model: CondGanModel, semantic, count: int | None = None) -> np.ndarray:
    e = np.atleast_2d(np.asarray(semantic, dtype=np.float64))
    if e.shape[1] != model.semantic_dim:
        raise ShapeError(f"semantic width {e.shape[1]} != model semantic_dim {model.semantic_dim}")
    if count is not None:
        if count < 1:
            raise ValueError("count must be >= 1")
        e = np.broadcast_to(e, (count, model.semantic_dim)) if len(e) == 1 else e
        if len(e) != count:
            raise ShapeError(f"{len(e)} semantic rows for {count} samples")
    return e


def generate(model: CondGanModel, semantic, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` features G(semantic, z_k) with independent z_k ~ N(0, I)."""
    e = _semantic_rows(model, semantic, count)
    z = rng.standard_normal((count, model.noise_dim))
    return mlp_apply(model.generator, np.concatenate([e, z], axis=1))


def interpolate_hat(x, x_bar, alpha):
    """alpha * x + (1 - alpha) * x_bar; ``alpha`` may be a scalar or one per row."""
    x, x_bar = np.asarray(x, dtype=np.float64), np.asarray(x_bar, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if x.shape != x_bar.shape:
        raise ShapeError(f"shapes {x.shape} and {x_bar.shape} differ")
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise ValueError("alpha must lie in [0, 1]")
    if alpha.ndim == 1 and x.ndim == 2:
        alpha = alpha[:, None]
    return alpha * x + (1.0 - alpha) * x_bar


@dataclass
class LossResult:
    loss: float
    grads: list[np.ndarray]
    gap: float = 0.0
    penalty: float = 0.0


def critic_loss(
    model: CondGanModel,
    features: np.ndarray,
    semantics: np.ndarray,
    rng: np.random.Generator,
    lambda_gp: float = 10.0,
) -> LossResult:
    """Critic loss and its gradient w.r.t. the discriminator only.

    ``penalty`` on the result is the weighted term, so ``loss == gap + penalty``.
    """
    n = len(features)
    if n == 0:
        raise ValueError("empty batch")
    e = _semantic_rows(model, semantics, n)
    z = rng.standard_normal((n, model.noise_dim))
    fake = mlp_apply(model.generator, np.concatenate([e, z], axis=1))
    alpha = rng.random(n)
    xhat = interpolate_hat(features, fake, alpha)

    g = Graph()
    D = model.discriminator
    # real and fake rows share one forward pass; the weights turn it into the gap
    both = np.concatenate([np.concatenate([features, e], 1), np.concatenate([fake, e], 1)])
    scores = mlp_forward(D, both, g)
    weights = np.concatenate([np.full((n, 1), -1.0 / n), np.full((n, 1), 1.0 / n)])
    gap = T.sum_(scores * weights)

    xh = g.leaf(xhat)
    grad = input_gradient(D, xh, g, cond=e)
    pen = T.mean(T.square(T.row_norm(grad) - 1.0))
    penalty = pen * float(lambda_gp)
    loss = gap + penalty
    grads = backward(g, loss, g.watch(D))
    return LossResult(loss.item(), [t.value for t in grads], gap.item(), penalty.item())


def generator_loss(model: CondGanModel, semantics: np.ndarray, rng: np.random.Generator) -> LossResult:
    """-mean D(G(e, z), e) and its gradient w.r.t. the generator only."""
    n = len(semantics)
    if n == 0:
        raise ValueError("empty batch")
    e = _semantic_rows(model, semantics, n)
    z = rng.standard_normal((n, model.noise_dim))
    g = Graph()
    fake = mlp_forward(model.generator, np.concatenate([e, z], axis=1), g)
    scores = mlp_forward(model.discriminator, T.concat([fake, e]), g, track=False)
    loss = -T.mean(scores)
    grads = backward(g, loss, g.watch(model.generator))
    return LossResult(loss.item(), [t.value for t in grads])


class BalancedSampler:
    """Batches that draw classes uniformly, then rows uniformly within class."""

    def __init__(self, groups: np.ndarray):
        self.classes = np.unique(groups)
        self.members = [np.flatnonzero(groups == c) for c in self.classes]
        self.sizes = np.array([len(m) for m in self.members])

    def __call__(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cls = rng.integers(0, len(self.classes), size=size)
        pos = (rng.random(size) * self.sizes[cls]).astype(np.int64)
        return np.array([self.members[c][p] for c, p in zip(cls, pos)], dtype=np.int64)


def train(
    data: ConditionedFeatures,
    config: GanConfig,
    rng: np.random.Generator,
    model: CondGanModel | None = None,
) -> CondGanModel:
    """Adversarial training with Adam on both networks.

    An epoch is ``ceil(N / batch)`` iterations; each iteration makes
    ``critic_steps`` critic updates followed by one generator update.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if model is None:
        model = init_model(data.features.shape[1], data.semantics.shape[1], config, rng)
    if data.features.shape[1] != model.feature_dim or data.semantics.shape[1] != model.semantic_dim:
        raise ShapeError("training data dimensions do not match the model")

    gen, disc = model.generator, model.discriminator
    betas = dict(beta1=config.beta1, beta2=config.beta2)
    g_state, d_state = AdamState.zeros_like(gen, **betas), AdamState.zeros_like(disc, **betas)
    log = list(model.log)
    sample = BalancedSampler(data.groups)
    iters = -(-len(data) // config.batch)

    for epoch in range(config.epochs):
        sums = np.zeros(4)
        n_critic = n_gen = 0
        for it in range(iters):
            try:
                for _ in range(config.critic_steps):
                    idx = sample(rng, config.batch)
                    cur = CondGanModel(gen, disc, model.noise_dim, model.feature_dim, model.semantic_dim)
                    res = critic_loss(cur, data.features[idx], data.semantics[idx], rng, config.lambda_gp)
                    disc, d_state = adam_step(disc, res.grads, d_state, config.lr)
                    sums[:3] += (res.loss, res.gap, res.penalty)
                    n_critic += 1
                idx = sample(rng, config.batch)
                cur = CondGanModel(gen, disc, model.noise_dim, model.feature_dim, model.semantic_dim)
                res = generator_loss(cur, data.semantics[idx], rng)
                gen, g_state = adam_step(gen, res.grads, g_state, config.lr)
                sums[3] += res.loss
                n_gen += 1
            except NonFiniteError as exc:
                raise NonFiniteError(f"GAN training diverged at epoch {epoch + 1}, iteration {it + 1}: {exc}") from exc
        log.append(
            {
                "epoch": len(log) + 1,
                "critic_loss": sums[0] / n_critic,
                "wasserstein_gap": sums[1] / n_critic,
                "gradient_penalty": sums[2] / n_critic,
                "generator_loss": sums[3] / n_gen,
            }
        )
    return CondGanModel(gen, disc, model.noise_dim, model.feature_dim, model.semantic_dim, log)


def log_jsonl(model: CondGanModel) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in model.log)


# --- checkpoint ------------------------------------------------------------------


def _pack_sizes(p: MlpParams) -> bytes:
    return struct.pack(f"<I{len(p.sizes)}I", len(p.sizes) - 1, *p.sizes)


def encode_gan(model: CondGanModel, config_hash: str = "") -> bytes:
    """SCPG: magic | u32 version | u32 noise, feature, semantic dims | f64 slope |
    generator sizes | critic sizes | 64-byte ASCII config hash | f64 payload."""
    head = GAN_MAGIC + struct.pack(
        "<4Id", GAN_VERSION, model.noise_dim, model.feature_dim, model.semantic_dim, model.generator.slope
    )
    tag = config_hash.encode("ascii").ljust(64, b"\0")[:64]
    payload = np.concatenate([model.generator.flat(), model.discriminator.flat()]).astype("<f8")
    return head + _pack_sizes(model.generator) + _pack_sizes(model.discriminator) + tag + payload.tobytes()


def _read_sizes(data: bytes, pos: int) -> tuple[list[int], int]:
    (layers,) = struct.unpack_from("<I", data, pos)
    sizes = list(struct.unpack_from(f"<{layers + 1}I", data, pos + 4))
    return sizes, pos + 4 * (layers + 2)


def _skeleton(sizes: list[int], slope: float) -> MlpParams:
    acts = ["leaky_relu"] * (len(sizes) - 2) + ["identity"]
    return MlpParams(
        [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])], [np.zeros(o) for o in sizes[1:]], acts, slope
    )


def decode_gan(data: bytes) -> tuple[CondGanModel, str]:
    if data[:4] != GAN_MAGIC:
        raise FormatError("bad magic")
    try:
        version, noise, feat, sem, slope = struct.unpack_from("<4Id", data, 4)
        if version != GAN_VERSION:
            raise FormatError(f"unsupported version {version}")
        g_sizes, pos = _read_sizes(data, 28)
        d_sizes, pos = _read_sizes(data, pos)
        tag = data[pos : pos + 64].rstrip(b"\0").decode("ascii")
        pos += 64
    except struct.error:
        raise FormatError("truncated payload") from None
    gen, disc = _skeleton(g_sizes, slope), _skeleton(d_sizes, slope)
    n_g, n_d = len(gen.flat()), len(disc.flat())
    if len(data) - pos != 8 * (n_g + n_d):
        raise FormatError("truncated payload")
    flat = np.frombuffer(data, dtype="<f8", offset=pos).astype(np.float64)
    try:
        model = CondGanModel(gen.from_flat(flat[:n_g]), disc.from_flat(flat[n_g:]), noise, feat, sem)
    except (ShapeError, NonFiniteError) as exc:
        raise FormatError(f"inconsistent checkpoint: {exc}") from None
    return model, tag
