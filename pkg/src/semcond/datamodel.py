"""Feature sets, class catalogs, semantic tables, splits and pipeline configs.

File formats
------------
SCPF feature file (little-endian)::

    b"SCPF" | u32 version=1 | u32 N | u32 b | u32 C
    C x (u32 byte length, UTF-8 class name)
    N x (b x f32 feature, u32 label)

Semantic table: text, one record per line, ``name v1 ... vd``.
Split and config: JSON documents.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import os
import re
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError, NonFiniteError, ShapeError

FEATURE_MAGIC = b"SCPF"
FEATURE_VERSION = 1


@dataclass(frozen=True)
class ClassCatalog:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if any(not n for n in names):
            raise FormatError("class names must be non-empty")
        if len(set(names)) != len(names):
            raise FormatError("class names must be unique")

    def __len__(self) -> int:
        return len(self.names)

    @property
    def ids(self) -> list[int]:
        return list(range(len(self.names)))

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise FormatError(f"unknown class {name!r}") from None

    def name_of(self, class_id: int) -> str:
        return self.names[class_id]


@dataclass(frozen=True, eq=False)
class LabeledFeatureSet:
    features: np.ndarray
    labels: np.ndarray
    catalog: ClassCatalog

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or labels.shape != (feats.shape[0],):
            raise ShapeError(f"features {feats.shape} and labels {labels.shape} disagree")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.catalog)):
            raise FormatError("label out of range")
        if not np.all(np.isfinite(feats)):
            raise NonFiniteError("non-finite feature")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, LabeledFeatureSet)
            and self.catalog == other.catalog
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def present_classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    def subset(self, mask: np.ndarray) -> "LabeledFeatureSet":
        return LabeledFeatureSet(self.features[mask], self.labels[mask], self.catalog)

    def restrict(self, class_ids: Iterable[int]) -> "LabeledFeatureSet":
        return self.subset(np.isin(self.labels, list(class_ids)))


# --- SCPF ----------------------------------------------------------------------


def encode_feature_file(fs: LabeledFeatureSet) -> bytes:
    n, b = fs.features.shape
    parts = [FEATURE_MAGIC, struct.pack("<4I", FEATURE_VERSION, n, b, len(fs.catalog))]
    for name in fs.catalog.names:
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw]
    record = np.dtype([("x", "<f4", (b,)), ("y", "<u4")])
    rows = np.empty(n, dtype=record)
    rows["x"] = fs.features.astype("<f4")
    rows["y"] = fs.labels.astype("<u4")
    parts.append(rows.tobytes())
    return b"".join(parts)


def decode_feature_file(data: bytes) -> LabeledFeatureSet:
    if len(data) < 4 or data[:4] != FEATURE_MAGIC:
        raise FormatError("bad magic")
    if len(data) < 20:
        raise FormatError("truncated payload")
    version, n, b, c = struct.unpack_from("<4I", data, 4)
    if version != FEATURE_VERSION:
        raise FormatError(f"unsupported version {version}")
    pos, names = 20, []
    for _ in range(c):
        if pos + 4 > len(data):
            raise FormatError("truncated payload")
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise FormatError("truncated payload")
        try:
            names.append(data[pos : pos + length].decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"class name is not UTF-8: {exc}") from None
        pos += length
    record = np.dtype([("x", "<f4", (b,)), ("y", "<u4")])
    if len(data) - pos != n * record.itemsize:
        raise FormatError("truncated payload")
    rows = np.frombuffer(data, dtype=record, count=n, offset=pos)
    labels = rows["y"].astype(np.int64)
    if n and labels.max() >= c:
        raise FormatError("label out of range")
    feats = rows["x"].astype(np.float64).reshape(n, b)
    if not np.all(np.isfinite(feats)):
        raise FormatError("non-finite feature")
    return LabeledFeatureSet(feats, labels, ClassCatalog(tuple(names)))


def write_feature_file(fs: LabeledFeatureSet, path) -> None:
    atomic_write(path, encode_feature_file(fs))


def read_feature_file(path) -> LabeledFeatureSet:
    return decode_feature_file(Path(path).read_bytes())


# --- semantic table --------------------------------------------------------------

_TOKEN_SPLIT = re.compile(r"[\s_]+")


@dataclass(frozen=True, eq=False)
class SemanticTable:
    vectors: dict[str, np.ndarray]
    dim: int = 300

    def __post_init__(self):
        for name, v in self.vectors.items():
            if np.shape(v) != (self.dim,):
                raise FormatError(f"embedding for {name!r} has shape {np.shape(v)}, expected ({self.dim},)")

    def __contains__(self, name: str) -> bool:
        return name in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.vectors[name]


def read_semantic_table(path, dim: int | None = 300) -> SemanticTable:
    """``dim=None`` takes the width from the first entry."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            name, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            if len(values) != dim:
                raise FormatError(f"line {lineno}: dimension mismatch ({len(values)} values, expected {dim})")
            if name in vectors:
                raise FormatError(f"line {lineno}: duplicate name {name!r}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric value") from None
            if not np.all(np.isfinite(vec)):
                raise FormatError(f"line {lineno}: non-finite value")
            vectors[name] = vec
    if dim is None:
        raise FormatError(f"{path}: empty semantic table")
    return SemanticTable(vectors, dim)


def write_semantic_table(table: SemanticTable, path) -> None:
    lines = [" ".join([name] + [repr(float(v)) for v in vec]) for name, vec in table.vectors.items()]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def resolve_embedding(table: SemanticTable, name: str) -> np.ndarray:
    """Whole-name hit, else the mean of the whitespace/underscore tokens."""
    if name in table:
        return table[name].copy()
    tokens = [t for t in _TOKEN_SPLIT.split(name) if t]
    missing = [t for t in tokens if t not in table]
    if not tokens or missing:
        raise FormatError(f"cannot resolve embedding for {name!r} (missing {missing or [name]})")
    return np.mean([table[t] for t in tokens], axis=0)


def class_embeddings(table: SemanticTable, catalog: ClassCatalog) -> np.ndarray:
    """(C, d) matrix of resolved embeddings in catalog order."""
    return np.stack([resolve_embedding(table, n) for n in catalog.names])


# --- split ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    seen: frozenset[str]
    unseen: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "seen", frozenset(self.seen))
        object.__setattr__(self, "unseen", frozenset(self.unseen))
        if not self.seen:
            raise FormatError("split needs at least one seen class")
        if self.seen & self.unseen:
            raise FormatError(f"seen and unseen overlap: {sorted(self.seen & self.unseen)}")

    def validate(self, catalog: ClassCatalog) -> None:
        unknown = (self.seen | self.unseen) - set(catalog.names)
        if unknown:
            raise FormatError(f"split references unknown class {sorted(unknown)}")

    def seen_ids(self, catalog: ClassCatalog) -> list[int]:
        self.validate(catalog)
        return sorted(catalog.id_of(n) for n in self.seen)

    def unseen_ids(self, catalog: ClassCatalog) -> list[int]:
        self.validate(catalog)
        return sorted(catalog.id_of(n) for n in self.unseen)

    def to_json(self) -> dict:
        return {"seen": sorted(self.seen), "unseen": sorted(self.unseen)}

    @classmethod
    def from_json(cls, doc: dict) -> "SplitSpec":
        if not isinstance(doc, dict) or "seen" not in doc:
            raise FormatError("split document needs a 'seen' list")
        return cls(frozenset(doc["seen"]), frozenset(doc.get("unseen", [])))


def read_split(path) -> SplitSpec:
    return SplitSpec.from_json(_load_json(path))


def write_split(split: SplitSpec, path) -> None:
    atomic_write(path, dump_json(split.to_json()))


def apply_split(fs: LabeledFeatureSet, split: SplitSpec) -> tuple[LabeledFeatureSet, LabeledFeatureSet]:
    """Partition rows into (seen, unseen) subsets; rows of other classes are dropped."""
    seen, unseen = split.seen_ids(fs.catalog), split.unseen_ids(fs.catalog)
    return fs.restrict(seen), fs.restrict(unseen)


# --- config ----------------------------------------------------------------------------


@dataclass
class GanConfig:
    epochs: int = 20
    batch: int = 32
    lr: float = 0.0005
    lambda_gp: float = 10.0
    noise_dim: int = 300
    critic_steps: int = 5
    beta1: float = 0.9
    beta2: float = 0.999
    generator_hidden: list[int] = field(default_factory=lambda: [1024])
    critic_hidden: list[int] = field(default_factory=lambda: [1024])


@dataclass
class MixupConfig:
    gamma: float = 0.5
    neighbors: int = 3


@dataclass
class ClassifierConfig:
    epochs: int = 10
    batch: int = 4096
    lr: float = 0.0001
    hidden: list[int] = field(default_factory=lambda: [256])


@dataclass
class SynthesisConfig:
    k_per_class: int = 5000


@dataclass
class PipelineConfig:
    gan: GanConfig = field(default_factory=GanConfig)
    mixup: MixupConfig = field(default_factory=MixupConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        g, c = self.gan, self.classifier
        counts = {
            "gan.epochs": g.epochs, "gan.batch": g.batch, "gan.noise_dim": g.noise_dim,
            "gan.critic_steps": g.critic_steps, "mixup.neighbors": self.mixup.neighbors,
            "classifier.batch": c.batch, "synthesis.k_per_class": self.synthesis.k_per_class,
        }
        # epochs = 0 is allowed for both trainers: it returns the initialisation
        for key, v in counts.items():
            if v < (0 if key.endswith("epochs") else 1):
                raise FormatError(f"{key} must be >= 1, got {v}")
        if c.epochs < 0:
            raise FormatError("classifier.epochs must be >= 0")
        for key, v in {"gan.lr": g.lr, "classifier.lr": c.lr}.items():
            if not v > 0:
                raise FormatError(f"{key} must be > 0, got {v}")
        if g.lambda_gp < 0:
            raise FormatError("gan.lambda_gp must be >= 0")
        if self.mixup.gamma < 0:
            raise FormatError("mixup.gamma must be >= 0")
        for widths in (g.generator_hidden, g.critic_hidden, c.hidden):
            if any(w < 1 for w in widths):
                raise FormatError("hidden widths must be >= 1")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "PipelineConfig":
        return merge_config(cls(), doc)

    def config_hash(self) -> str:
        return hashlib.sha256(dump_json(self.to_json())).hexdigest()


_SECTIONS = {"gan": GanConfig, "mixup": MixupConfig, "classifier": ClassifierConfig, "synthesis": SynthesisConfig}


def merge_config(base: PipelineConfig, doc: dict) -> PipelineConfig:
    """Overlay a (possibly partial) JSON document onto ``base``."""
    if not isinstance(doc, dict):
        raise FormatError("config must be a JSON object")
    merged = base.to_json()
    for key, value in doc.items():
        if key == "seed":
            merged["seed"] = int(value)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise FormatError(f"config section {key!r} must be an object")
            known = {f.name for f in dataclasses.fields(_SECTIONS[key])}
            extra = set(value) - known
            if extra:
                raise FormatError(f"unknown keys in {key!r}: {sorted(extra)}")
            merged[key].update(value)
        else:
            raise FormatError(f"unknown config key {key!r}")
    try:
        return PipelineConfig(
            **{k: _SECTIONS[k](**merged[k]) for k in _SECTIONS}, seed=int(merged["seed"])
        )
    except TypeError as exc:
        raise FormatError(f"bad config: {exc}") from None


def read_config(path) -> PipelineConfig:
    return PipelineConfig.from_json(_load_json(path))


def write_config(config: PipelineConfig, path) -> None:
    atomic_write(path, dump_json(config.to_json()))


# --- io helpers ------------------------------------------------------------------------


def dump_json(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def atomic_write(path, data: bytes) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- task modes ------------------------------------------------------------------------


class TaskMode(str, enum.Enum):
    C3DS = "c3ds"
    Z3DS = "z3ds"
    GZ3DS = "gz3ds"

    @classmethod
    def parse(cls, value) -> "TaskMode":
        try:
            return cls(str(value).lower())
        except ValueError:
            raise FormatError(f"unknown task mode {value!r}") from None

    def label_space(self, split: SplitSpec, catalog: ClassCatalog) -> list[int]:
        """Sorted class ids a model in this mode may predict."""
        if self is TaskMode.C3DS:
            ids = split.seen_ids(catalog)
        elif self is TaskMode.Z3DS:
            ids = split.unseen_ids(catalog)
        else:
            ids = sorted(split.seen_ids(catalog) + split.unseen_ids(catalog))
        if not ids:
            raise FormatError(f"{self.value} label space is empty for this split")
        return ids
