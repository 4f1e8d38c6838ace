"""Pseudo-feature synthesis, softmax classifier and the visual-to-semantic baseline.

A classifier's label space is structural: the network has one output per
label, so it cannot emit an id outside the space it was trained for.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import AdamState, Graph, MlpParams, adam_step, backward, init_mlp, mlp_apply, mlp_forward
from .autodiff import tensor as T
from .condgan import CondGanModel, generate
from .datamodel import ClassCatalog, ClassifierConfig, LabeledFeatureSet
from .errors import FormatError, NonFiniteError, ShapeError

CLASSIFIER_MAGIC = b"SCPC"
CLASSIFIER_VERSION = 1


def synthesize_training_set(
    gan: CondGanModel,
    embeddings: np.ndarray,
    catalog: ClassCatalog,
    labels,
    k: int,
    rng: np.random.Generator,
) -> LabeledFeatureSet:
    """Exactly ``k`` generated features per label, in label order.

    ``embeddings`` is the (C, d) matrix of class semantics indexed by class id.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or embeddings.shape[0] != len(catalog):
        raise ShapeError(f"embeddings shape {embeddings.shape} does not cover {len(catalog)} classes")
    if embeddings.shape[1] != gan.semantic_dim:
        raise ShapeError(f"semantic dim {embeddings.shape[1]} != generator semantic dim {gan.semantic_dim}")
    if k < 1:
        raise ValueError("k must be >= 1")
    labels = [int(c) for c in labels]
    feats = [generate(gan, embeddings[c], rng, k) for c in labels]
    ys = np.repeat(np.array(labels, dtype=np.int64), k)
    return LabeledFeatureSet(np.concatenate(feats), ys, catalog)


@dataclass
class ClassifierModel:
    params: MlpParams
    labels: tuple[int, ...]
    log: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.labels = tuple(int(c) for c in self.labels)
        if list(self.labels) != sorted(set(self.labels)):
            raise ValueError("label space must be strictly increasing")
        if self.params.out_dim != len(self.labels):
            raise ShapeError(f"output width {self.params.out_dim} != label space size {len(self.labels)}")


def _label_positions(labels: np.ndarray, space: tuple[int, ...]) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(space)}
    try:
        return np.array([lookup[int(c)] for c in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]} outside the label space") from None


def cross_entropy(params: MlpParams, x: np.ndarray, targets: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean softmax cross-entropy and its parameter gradients."""
    g = Graph()
    logp = T.log_softmax(mlp_forward(params, x, g))
    onehot = np.zeros(logp.shape)
    onehot[np.arange(len(targets)), targets] = 1.0 / len(targets)
    loss = -T.sum_(logp * onehot)
    grads = backward(g, loss, g.watch(params))
    return loss.item(), [t.value for t in grads]


def mean_loss(model: ClassifierModel, fs: LabeledFeatureSet) -> float:
    logits = mlp_apply(model.params, fs.features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    pos = _label_positions(fs.labels, model.labels)
    return float(-logp[np.arange(len(pos)), pos].mean())


def train_classifier(
    fs: LabeledFeatureSet,
    config: ClassifierConfig,
    rng: np.random.Generator,
    labels=None,
) -> ClassifierModel:
    """Adam on mean cross-entropy over shuffled mini-batches.

    ``labels`` defaults to the classes present in ``fs``.
    """
    space = tuple(sorted(int(c) for c in (fs.present_classes() if labels is None else labels)))
    if len(set(space)) < 2 or len(fs.present_classes()) < 2:
        raise ValueError("classifier training needs at least two classes")
    targets = _label_positions(fs.labels, space)
    params = init_mlp([fs.feature_dim, *config.hidden, len(space)], rng)
    state = AdamState.zeros_like(params)
    log = []
    n = len(fs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            idx = order[start : start + config.batch]
            try:
                loss, grads = cross_entropy(params, fs.features[idx], targets[idx])
            except NonFiniteError as exc:
                raise NonFiniteError(f"classifier training diverged at epoch {epoch + 1}: {exc}") from exc
            params, state = adam_step(params, grads, state, config.lr)
            total += loss * len(idx)
        log.append({"epoch": epoch + 1, "loss": total / n})
    return ClassifierModel(params, space, log)


def predict(model: ClassifierModel, x) -> np.ndarray:
    """Restricted argmax over the model's label space; lower id wins ties."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.params.in_dim:
        raise ShapeError(f"feature dim {x.shape[1]} != classifier input dim {model.params.in_dim}")
    logits = mlp_apply(model.params, x)
    # argmax returns the first maximum and labels are increasing
    return np.asarray(model.labels, dtype=np.int64)[np.argmax(logits, axis=1)]


# --- checkpoint ------------------------------------------------------------------


def encode_classifier(model: ClassifierModel, config_hash: str = "") -> bytes:
    """SCPC: magic | u32 version | u32 L | L x u32 labels | 64-byte config hash |
    f64 slope | u32 layers | layer sizes | f64 payload."""
    p = model.params
    out = [
        CLASSIFIER_MAGIC,
        struct.pack(f"<2I{len(model.labels)}I", CLASSIFIER_VERSION, len(model.labels), *model.labels),
        config_hash.encode("ascii").ljust(64, b"\0")[:64],
        struct.pack(f"<dI{len(p.sizes)}I", p.slope, len(p.sizes) - 1, *p.sizes),
        p.flat().astype("<f8").tobytes(),
    ]
    return b"".join(out)


def decode_classifier(data: bytes) -> tuple[ClassifierModel, str]:
    if data[:4] != CLASSIFIER_MAGIC:
        raise FormatError("bad magic")
    try:
        version, n_labels = struct.unpack_from("<2I", data, 4)
        if version != CLASSIFIER_VERSION:
            raise FormatError(f"unsupported version {version}")
        labels = struct.unpack_from(f"<{n_labels}I", data, 12)
        pos = 12 + 4 * n_labels
        tag = data[pos : pos + 64].rstrip(b"\0").decode("ascii")
        pos += 64
        slope, layers = struct.unpack_from("<dI", data, pos)
        sizes = list(struct.unpack_from(f"<{layers + 1}I", data, pos + 12))
        pos += 12 + 4 * (layers + 1)
    except struct.error:
        raise FormatError("truncated payload") from None
    acts = ["leaky_relu"] * (len(sizes) - 2) + ["identity"]
    shapes = list(zip(sizes[1:], sizes[:-1]))
    count = sum(o * i + o for o, i in shapes)
    if len(data) - pos != 8 * count:
        raise FormatError("truncated payload")
    flat = np.frombuffer(data, dtype="<f8", offset=pos).astype(np.float64)
    arrays, k = [], 0
    for o, i in shapes:
        arrays += [flat[k : k + o * i].reshape(o, i), flat[k + o * i : k + o * i + o]]
        k += o * i + o
    try:
        params = MlpParams(arrays[0::2], arrays[1::2], acts, slope)
        return ClassifierModel(params, labels), tag
    except (ShapeError, NonFiniteError, ValueError) as exc:
        raise FormatError(f"inconsistent checkpoint: {exc}") from None


# --- visual-to-semantic baseline --------------------------------------------------


@dataclass
class V2SModel:
    """phi: feature -> semantic space."""

    params: MlpParams
    log: list[dict] = field(default_factory=list)


def v2s_baseline_train(
    fs: LabeledFeatureSet,
    embeddings: np.ndarray,
    config: ClassifierConfig,
    rng: np.random.Generator,
) -> V2SModel:
    """Least-squares regression of each feature onto its class embedding."""
    if len(fs.present_classes()) < 2:
        raise ValueError("V2S training needs at least two classes")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    targets = embeddings[fs.labels]
    params = init_mlp([fs.feature_dim, *config.hidden, embeddings.shape[1]], rng)
    state = AdamState.zeros_like(params)
    log = []
    n = len(fs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch):
            idx = order[start : start + config.batch]
            g = Graph()
            diff = mlp_forward(params, fs.features[idx], g) - targets[idx]
            loss = T.sum_(T.square(diff)) * (1.0 / len(idx))
            grads = backward(g, loss, g.watch(params))
            params, state = adam_step(params, grads, state, config.lr)
            total += loss.item() * len(idx)
        log.append({"epoch": epoch + 1, "loss": total / n})
    return V2SModel(params, log)


def cosine_nearest(projected: np.ndarray, embeddings: np.ndarray, labels) -> np.ndarray:
    """Label whose embedding has the highest cosine with each row; lower id on ties."""
    labels = np.asarray(sorted(int(c) for c in labels), dtype=np.int64)
    if len(labels) == 0:
        raise ValueError("empty label space")
    cand = np.asarray(embeddings, dtype=np.float64)[labels]
    cn = np.linalg.norm(cand, axis=1)
    pn = np.linalg.norm(projected, axis=1)
    sims = (projected @ cand.T) / np.where(pn == 0, 1.0, pn)[:, None] / np.where(cn == 0, 1.0, cn)[None, :]
    return labels[np.argmax(sims, axis=1)]


def v2s_predict(model: V2SModel, x, embeddings: np.ndarray, labels) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.params.in_dim:
        raise ShapeError(f"feature dim {x.shape[1]} != embedding model input dim {model.params.in_dim}")
    return cosine_nearest(mlp_apply(model.params, x), embeddings, labels)
