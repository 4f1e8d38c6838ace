"""Confusion matrices, OA / mACC / mIoU and the seen-unseen harmonic mean."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datamodel import ClassCatalog, SplitSpec, TaskMode, dump_json
from .errors import FormatError, LabelSpaceError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are gold classes, columns predictions, both in ``labels`` order."""

    counts: np.ndarray
    labels: tuple[int, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(golds, preds, labels) -> ConfusionMatrix:
    golds = np.asarray(golds, dtype=np.int64).ravel()
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = tuple(int(c) for c in labels)
    if golds.shape != preds.shape:
        raise ValueError(f"{golds.size} gold labels but {preds.size} predictions")
    lookup = np.full(max(labels, default=-1) + 2, -1, dtype=np.int64)
    lookup[list(labels)] = np.arange(len(labels))

    def positions(ids, what):
        bad = (ids < 0) | (ids >= len(lookup) - 1)
        pos = np.where(bad, -1, lookup[np.clip(ids, 0, len(lookup) - 1)])
        if np.any(pos < 0):
            raise LabelSpaceError(f"{what} id {int(ids[pos < 0][0])} outside label space {list(labels)}")
        return pos

    gi, pi = positions(golds, "gold"), positions(preds, "predicted")
    L = len(labels)
    counts = np.bincount(gi * L + pi, minlength=L * L).reshape(L, L)
    return ConfusionMatrix(counts, labels)


@dataclass(frozen=True)
class Rates:
    oa: float
    macc: float
    miou: float
    acc: dict[int, float]
    iou: dict[int, float]


def overall_and_per_class(cm: ConfusionMatrix) -> Rates:
    """Percent rates. Classes with no gold points are left out of the means."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    c = cm.counts
    tp = np.diag(c).astype(np.float64)
    gold = c.sum(axis=1)
    pred = c.sum(axis=0)
    acc, iou = {}, {}
    for i, label in enumerate(cm.labels):
        if gold[i] == 0:
            continue
        acc[label] = 100.0 * tp[i] / gold[i]
        iou[label] = 100.0 * tp[i] / (gold[i] + pred[i] - tp[i])
    return Rates(
        oa=100.0 * tp.sum() / cm.total,
        macc=float(np.mean(list(acc.values()))),
        miou=float(np.mean(list(iou.values()))),
        acc=acc,
        iou=iou,
    )


def harmonic(seen: float, unseen: float) -> float:
    lo, hi = sorted((float(seen), float(unseen)))
    if hi == 0:
        return 0.0
    # ordered so the result is symmetric and a*a never underflows
    return 2.0 * lo * (hi / (lo + hi))


def _mean_over(values: dict[int, float], ids) -> float:
    picked = [values[i] for i in ids if i in values]
    return float(np.mean(picked)) if picked else 0.0


@dataclass
class EvalReport:
    mode: TaskMode
    oa: float
    macc: float
    miou: float
    per_class: dict[str, dict[str, float]]
    aggregates: dict[str, float] = field(default_factory=dict)
    config: dict | None = None
    config_hash: str | None = None
    seed: int | None = None
    points: int = 0

    def __getattr__(self, name):
        aggregates = self.__dict__.get("aggregates", {})
        if name in aggregates:
            return aggregates[name]
        raise AttributeError(name)

    def to_json(self) -> dict:
        r = lambda v: round(float(v), 1)
        doc = {
            "mode": self.mode.value,
            "points": self.points,
            "oa": r(self.oa),
            "macc": r(self.macc),
            "miou": r(self.miou),
            "per_class": {
                name: {k: r(v) for k, v in vals.items()} for name, vals in sorted(self.per_class.items())
            },
        }
        doc.update({k: r(v) for k, v in self.aggregates.items()})
        if self.config is not None:
            doc["config"] = self.config
        if self.config_hash is not None:
            doc["config_hash"] = self.config_hash
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc

    def dumps(self) -> bytes:
        return dump_json(self.to_json())


def evaluate(golds, preds, mode: TaskMode, split: SplitSpec, catalog: ClassCatalog) -> EvalReport:
    """Score predictions over the mode's label space.

    GZ3DS adds seen-only and unseen-only aggregates computed from the joint
    confusion matrix, and their harmonic means ``hacc`` / ``hiou``.
    """
    labels = mode.label_space(split, catalog)
    golds = np.asarray(golds, dtype=np.int64)
    if golds.size == 0:
        raise FormatError("nothing to evaluate")
    cm = confusion(golds, preds, labels)
    rates = overall_and_per_class(cm)
    per_class = {
        catalog.name_of(c): {"acc": rates.acc[c], "iou": rates.iou[c]} for c in rates.acc
    }
    agg: dict[str, float] = {}
    if mode is TaskMode.Z3DS:
        agg = {"macc_u": rates.macc, "miou_u": rates.miou}
    elif mode is TaskMode.GZ3DS:
        seen, unseen = split.seen_ids(catalog), split.unseen_ids(catalog)
        agg["macc_s"] = _mean_over(rates.acc, seen)
        agg["macc_u"] = _mean_over(rates.acc, unseen)
        agg["hacc"] = harmonic(agg["macc_s"], agg["macc_u"])
        agg["miou_s"] = _mean_over(rates.iou, seen)
        agg["miou_u"] = _mean_over(rates.iou, unseen)
        agg["hiou"] = harmonic(agg["miou_s"], agg["miou_u"])
    for v in [rates.oa, rates.macc, rates.miou, *agg.values()]:
        if not (0.0 <= v <= 100.0 + 1e-9) or math.isnan(v):
            raise FormatError(f"rate {v} outside [0, 100]")
    return EvalReport(mode, rates.oa, rates.macc, rates.miou, per_class, agg, points=int(golds.size))
