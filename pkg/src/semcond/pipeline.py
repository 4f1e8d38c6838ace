"""End-to-end orchestration: GAN on seen data, pseudo-features, classifier, report."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import condgan
from .autodiff import make_rng
from .datamodel import (
    LabeledFeatureSet,
    PipelineConfig,
    SemanticTable,
    SplitSpec,
    TaskMode,
    atomic_write,
    class_embeddings,
    dump_json,
    read_feature_file,
    read_semantic_table,
    read_split,
    write_feature_file,
)
from .errors import FormatError, LabelSpaceError, SemcondError
from .metrics import EvalReport, evaluate
from .mixup import synthesize_mixup

# independent random streams per stage, all derived from the run seed
GAN_STREAM, SYNTH_STREAM, CLASSIFIER_STREAM, MIXUP_STREAM = 1, 2, 3, 4


@contextlib.contextmanager
def stage(name: str):
    """Re-raise library errors with the stage name in front of the message."""
    try:
        yield
    except (SemcondError, ValueError) as exc:
        try:
            wrapped = type(exc)(f"{name}: {exc}")
        except TypeError:
            raise exc
        raise wrapped from exc


@dataclass
class PipelinePaths:
    features: Path
    test_features: Path
    semantics: Path
    split: Path
    out_dir: Path

    def __post_init__(self):
        for name in ("features", "test_features", "semantics", "split", "out_dir"):
            setattr(self, name, Path(getattr(self, name)))


@dataclass
class PipelineResult:
    report: EvalReport
    gan: condgan.CondGanModel
    classifier: clf.ClassifierModel
    synthetic: LabeledFeatureSet


def check_catalogs(*sets: LabeledFeatureSet) -> None:
    first = sets[0].catalog
    for fs in sets[1:]:
        if fs.catalog != first:
            raise FormatError("feature files disagree on the class catalog")


def gan_training_data(
    seen: LabeledFeatureSet, table: SemanticTable, config: PipelineConfig, seed: int
) -> condgan.ConditionedFeatures:
    """Real seen pairs, plus mixup pairs when gamma > 0."""
    data = condgan.ConditionedFeatures.from_labeled(seen, table)
    if config.mixup.gamma > 0:
        mixed = synthesize_mixup(
            seen, table, config.mixup.neighbors, config.mixup.gamma, make_rng(seed, MIXUP_STREAM)
        )
        data = data.concat(mixed)
    return data


def train_gan_stage(
    fs: LabeledFeatureSet, table: SemanticTable, split: SplitSpec, config: PipelineConfig, seed: int
) -> condgan.CondGanModel:
    with stage("train-gan"):
        split.validate(fs.catalog)
        seen = fs.restrict(split.seen_ids(fs.catalog))
        if len(seen) == 0:
            raise FormatError("no seen-class features to train on")
        data = gan_training_data(seen, table, config, seed)
        return condgan.train(data, config.gan, make_rng(seed, GAN_STREAM))


def synth_stage(
    gan: condgan.CondGanModel,
    table: SemanticTable,
    catalog,
    labels,
    config: PipelineConfig,
    seed: int,
) -> LabeledFeatureSet:
    with stage("synth-features"):
        emb = class_embeddings(table, catalog)
        return clf.synthesize_training_set(
            gan, emb, catalog, labels, config.synthesis.k_per_class, make_rng(seed, SYNTH_STREAM)
        )


def train_classifier_stage(
    synthetic: LabeledFeatureSet, labels, config: PipelineConfig, seed: int
) -> clf.ClassifierModel:
    with stage("train-classifier"):
        return clf.train_classifier(synthetic, config.classifier, make_rng(seed, CLASSIFIER_STREAM), labels)


def evaluation_points(test: LabeledFeatureSet, mode: TaskMode, split: SplitSpec) -> LabeledFeatureSet:
    """Test points of the mode's classes; any gold outside the split is an error."""
    catalog = test.catalog
    known = set(split.seen_ids(catalog)) | set(split.unseen_ids(catalog))
    stray = sorted(set(np.unique(test.labels).tolist()) - known)
    if stray:
        raise LabelSpaceError(f"gold labels {[catalog.name_of(c) for c in stray]} are not in the split")
    return test.restrict(mode.label_space(split, catalog))


def evaluate_stage(
    model: clf.ClassifierModel,
    test: LabeledFeatureSet,
    mode: TaskMode,
    split: SplitSpec,
    config: PipelineConfig,
    seed: int,
) -> EvalReport:
    with stage("evaluate"):
        labels = mode.label_space(split, test.catalog)
        if tuple(labels) != model.labels:
            raise LabelSpaceError(
                f"classifier label space {list(model.labels)} does not match the {mode.value} space {labels}"
            )
        points = evaluation_points(test, mode, split)
        preds = clf.predict(model, points.features)
        report = evaluate(points.labels, preds, mode, split, test.catalog)
    report.config = config.to_json()
    report.config_hash = config.config_hash()
    report.seed = seed
    return report


def run_in_memory(
    train: LabeledFeatureSet,
    test: LabeledFeatureSet,
    table: SemanticTable,
    split: SplitSpec,
    config: PipelineConfig,
    mode: TaskMode,
    gan: condgan.CondGanModel | None = None,
) -> PipelineResult:
    """The full pipeline without file I/O. A pre-trained ``gan`` skips its stage."""
    check_catalogs(train, test)
    seed = config.seed
    split.validate(train.catalog)
    labels = mode.label_space(split, train.catalog)
    if gan is None:
        gan = train_gan_stage(train, table, split, config, seed)
    synthetic = synth_stage(gan, table, train.catalog, labels, config, seed)
    model = train_classifier_stage(synthetic, labels, config, seed)
    report = evaluate_stage(model, test, mode, split, config, seed)
    return PipelineResult(report, gan, model, synthetic)


def load_inputs(paths: PipelinePaths):
    with stage("load"):
        train = read_feature_file(paths.features)
        test = read_feature_file(paths.test_features)
        table = read_semantic_table(paths.semantics, dim=None)
        split = read_split(paths.split)
        check_catalogs(train, test)
        split.validate(train.catalog)
        class_embeddings(table, train.catalog)
    return train, test, table, split


def run_pipeline(config: PipelineConfig, mode: TaskMode, paths: PipelinePaths) -> EvalReport:
    """Run every stage from files and write all artifacts under ``paths.out_dir``."""
    train, test, table, split = load_inputs(paths)
    result = run_in_memory(train, test, table, split, config, mode)
    write_artifacts(paths.out_dir, result, config)
    return result.report


def write_artifacts(out_dir: Path, result: PipelineResult, config: PipelineConfig) -> None:
    out_dir = Path(out_dir)
    tag = config.config_hash()
    atomic_write(out_dir / "config.json", dump_json(config.to_json()))
    atomic_write(out_dir / "gan.scpg", condgan.encode_gan(result.gan, tag))
    atomic_write(out_dir / "gan_log.jsonl", condgan.log_jsonl(result.gan).encode("utf-8"))
    write_feature_file(result.synthetic, out_dir / "synthetic.scpf")
    atomic_write(out_dir / "classifier.scpc", clf.encode_classifier(result.classifier, tag))
    atomic_write(out_dir / "report.json", result.report.dumps())
