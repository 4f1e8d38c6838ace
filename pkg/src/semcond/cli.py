"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import classifier as clf
from . import condgan, pipeline, synthbench
from .datamodel import (
    PipelineConfig,
    TaskMode,
    atomic_write,
    merge_config,
    read_config,
    read_feature_file,
    read_semantic_table,
    read_split,
    write_feature_file,
    write_semantic_table,
    write_config,
    write_split,
)
from .errors import NonFiniteError, SemcondError

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="semcond", description="Semantics-conditioned point-feature pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, *flags):
        p.add_argument("--config", help="JSON config; flags override its values")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--out-dir", required=True)
        for flag in flags:
            p.add_argument(f"--{flag}", required=True)

    p = sub.add_parser("make-synthetic", help="write a synthetic feature world")
    p.add_argument("--world", choices=sorted(synthbench.WORLDS), default="default")
    p.add_argument("--samples-per-class", type=int, default=2000)
    p.add_argument("--test-samples-per-class", type=int)
    common(p)

    p = sub.add_parser("train-gan", help="train the conditional generator on seen classes")
    common(p, "features", "semantics", "split")

    p = sub.add_parser("synth-features", help="generate K features per class of the mode's label space")
    common(p, "gan", "features", "semantics", "split")
    p.add_argument("--mode", required=True, choices=[m.value for m in TaskMode])

    p = sub.add_parser("train-classifier", help="train the classifier on generated features")
    common(p, "features", "split")
    p.add_argument("--mode", required=True, choices=[m.value for m in TaskMode])

    p = sub.add_parser("evaluate", help="score a classifier on test features")
    common(p, "model", "test-features", "split")
    p.add_argument("--mode", required=True, choices=[m.value for m in TaskMode])

    p = sub.add_parser("run-pipeline", help="all stages end to end")
    common(p, "features", "test-features", "semantics", "split")
    p.add_argument("--mode", required=True, choices=[m.value for m in TaskMode])
    return parser


def _config(args) -> PipelineConfig:
    config = read_config(_file(args.config)) if args.config else PipelineConfig()
    if args.seed is not None:
        config = merge_config(config, {"seed": args.seed})
    return config


def _make_synthetic(args, config: PipelineConfig, out: Path) -> None:
    if args.samples_per_class < 1:
        raise UsageError("--samples-per-class must be >= 1")
    spec = synthbench.WORLDS[args.world](seed=config.seed, samples_per_class=args.samples_per_class)
    fs, table, _ = synthbench.make_world(spec)
    write_feature_file(fs, out / "train.scpf")
    write_feature_file(synthbench.draw_test_set(spec, args.test_samples_per_class), out / "test.scpf")
    write_semantic_table(table, out / "semantics.txt")
    write_split(spec.split(), out / "split.json")
    write_config(synthbench.desk_config(config.seed), out / "config.json")


def _train_gan(args, config: PipelineConfig, out: Path) -> None:
    fs = read_feature_file(_file(args.features))
    table = read_semantic_table(_file(args.semantics), dim=None)
    split = read_split(_file(args.split))
    gan = pipeline.train_gan_stage(fs, table, split, config, config.seed)
    atomic_write(out / "gan.scpg", condgan.encode_gan(gan, config.config_hash()))
    atomic_write(out / "gan_log.jsonl", condgan.log_jsonl(gan).encode("utf-8"))


def _synth_features(args, config: PipelineConfig, out: Path) -> None:
    gan, _ = condgan.decode_gan(_file(args.gan).read_bytes())
    catalog = read_feature_file(_file(args.features)).catalog
    table = read_semantic_table(_file(args.semantics), dim=None)
    split = read_split(_file(args.split))
    labels = TaskMode.parse(args.mode).label_space(split, catalog)
    synthetic = pipeline.synth_stage(gan, table, catalog, labels, config, config.seed)
    write_feature_file(synthetic, out / "synthetic.scpf")


def _train_classifier(args, config: PipelineConfig, out: Path) -> None:
    fs = read_feature_file(_file(args.features))
    split = read_split(_file(args.split))
    labels = TaskMode.parse(args.mode).label_space(split, fs.catalog)
    model = pipeline.train_classifier_stage(fs, labels, config, config.seed)
    atomic_write(out / "classifier.scpc", clf.encode_classifier(model, config.config_hash()))


def _evaluate(args, config: PipelineConfig, out: Path) -> None:
    model, _ = clf.decode_classifier(_file(args.model).read_bytes())
    test = read_feature_file(_file(args.test_features))
    split = read_split(_file(args.split))
    report = pipeline.evaluate_stage(model, test, TaskMode.parse(args.mode), split, config, config.seed)
    atomic_write(out / "report.json", report.dumps())


def _run_pipeline(args, config: PipelineConfig, out: Path) -> None:
    paths = pipeline.PipelinePaths(
        _file(args.features), _file(args.test_features), _file(args.semantics), _file(args.split), out
    )
    pipeline.run_pipeline(config, TaskMode.parse(args.mode), paths)


COMMANDS = {
    "make-synthetic": _make_synthetic,
    "train-gan": _train_gan,
    "synth-features": _synth_features,
    "train-classifier": _train_classifier,
    "evaluate": _evaluate,
    "run-pipeline": _run_pipeline,
}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = _config(args)
        COMMANDS[args.command](args, config, Path(args.out_dir))
    except UsageError as exc:
        print(f"semcond: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"semcond: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SemcondError, ValueError, OSError) as exc:
        print(f"semcond: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


def main() -> None:
    sys.exit(run())
