"""Command-line driver.

Subcommands:
    build       train an ensemble from a config file and store it
    evaluate    run the cascade over a dataset, write metrics artifacts
    histograms  dump one member's uncertainty/probability histograms
    baseline    train and score the single-model reference

Exit codes partition the failure classes so sweeps can script against
them: 0 ok, 2 config, 3 data, 4 degenerate training subset, 5 storage,
1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .builder import build_ensemble, indices_file_content, member_prediction_arrays
from .cascade import CONSENSUS_CHOICES, RuntimeConfig, batch_evaluate
from .config import (
    DatasetSource,
    load_dataset,
    load_experiment_config,
    parse_dataset_block,
)
from .datasets import Dataset, load_csv
from .errors import (
    ConfigError,
    DatasetParseError,
    DegenerateSubsetError,
    EmptyTrainingSetError,
    InvalidInputError,
    InvalidViewError,
    ManifestDigestError,
    ManifestVersionError,
)
from .manifest import EnsembleManifest
from .metrics import (
    SCORE_KIND_TOP_PROBABILITY,
    SCORE_KIND_UNCERTAINTY,
    expected_calibration_error,
    score_histogram,
)
from .persist import load_manifest, save_manifest

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4
EXIT_STORAGE = 5


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_out(args_out: str | None, config_out: str | None) -> Path:
    out = args_out or config_out
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir in the config")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_eval_data(src: str, num_classes: int) -> Dataset:
    path = Path(src)
    if path.suffix == ".csv":
        return load_csv(path, num_classes=num_classes)
    if path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            block = json.load(fh)
        source = parse_dataset_block(block, base=path.parent)
        return load_dataset(source, num_classes=num_classes)
    raise ConfigError(f"--data must be a .csv file or a .json dataset block, got {src}")


def _parse_thresholds(text: str, num_members: int) -> tuple[float, ...]:
    try:
        values = tuple(float(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad --runtime-thresholds {text!r}: {exc}") from exc
    if len(values) == 1:
        return values * num_members
    return values


def cmd_build(args) -> int:
    cfg = load_experiment_config(args.config)
    out = _resolve_out(args.out, cfg.output_dir)
    data = load_dataset(cfg.dataset)
    manifest, report = build_ensemble(
        data,
        cfg.build_config_for(data),
        default_runtime=cfg.default_runtime(),
        histogram_bins=cfg.histogram_bins,
    )
    save_manifest(manifest, out)
    _write_json(out / "build_report.json", report.to_json_dict())
    if manifest.num_members > 1:
        subset_dir = out / "subsets"
        subset_dir.mkdir(exist_ok=True)
        for record in report.members[1:]:
            (subset_dir / f"level_{record.level}.idx").write_text(
                indices_file_content(record.subset_indices), encoding="utf-8"
            )
    for record in report.members:
        print(
            f"member {record.level}: trained on {record.subset_size} samples, "
            f"final loss {record.final_loss:.6f} ({record.train_seconds:.2f}s)"
        )
    print(f"wrote ensemble to {out}")
    return EXIT_OK


def _evaluate_to_dir(
    manifest: EnsembleManifest,
    rcfg: RuntimeConfig,
    data: Dataset,
    out: Path,
    calibration_bins: int,
) -> float:
    record = batch_evaluate(manifest, rcfg, data)
    calibration = expected_calibration_error(
        [o.chosen.top_probability for o in record.outcomes],
        [o.correct for o in record.outcomes],
        num_bins=calibration_bins,
    )
    _write_json(out / "evaluation.json", record.to_json_dict())
    record.write_csv(out / "evaluation.csv")
    _write_json(out / "calibration.json", calibration.to_json_dict())
    _write_json(out / "utilization.json", record.utilization_summary())
    print(
        f"accuracy {record.accuracy:.4f}, ece {calibration.ece:.4f}, "
        f"consensus on {record.consensus_count}/{record.num_samples} samples"
    )
    return record.accuracy


def cmd_evaluate(args) -> int:
    manifest = load_manifest(args.ensemble)
    data = _load_eval_data(args.data, manifest.members[0].spec.num_classes)
    thresholds = (
        _parse_thresholds(args.runtime_thresholds, manifest.num_members)
        if args.runtime_thresholds
        else manifest.default_runtime.thresholds
    )
    consensus = args.consensus or manifest.default_runtime.consensus
    rcfg = RuntimeConfig(thresholds=thresholds, consensus=consensus)
    out = _resolve_out(args.out, None)
    _evaluate_to_dir(manifest, rcfg, data, out, args.calibration_bins)
    return EXIT_OK


def cmd_histograms(args) -> int:
    manifest = load_manifest(args.ensemble)
    if not 0 <= args.member < manifest.num_members:
        raise ConfigError(
            f"--member {args.member} out of range for {manifest.num_members} members"
        )
    data = _load_eval_data(args.data, manifest.members[0].spec.num_classes)
    member = manifest.members[args.member]
    if data.feature_dim != member.spec.input_dim:
        raise InvalidInputError(
            f"dataset feature_dim {data.feature_dim} != ensemble input_dim "
            f"{member.spec.input_dim}"
        )
    cls, top, unc = member_prediction_arrays(member, data.features)
    correct = cls == data.labels
    out = _resolve_out(args.out, None)
    for kind, scores in (
        (SCORE_KIND_UNCERTAINTY, unc),
        (SCORE_KIND_TOP_PROBABILITY, top),
    ):
        hist = score_histogram(scores, correct, kind=kind, bins=args.bins)
        hist.write_csv(out / f"member{args.member}_{kind}_hist.csv")
    print(f"wrote histograms for member {args.member} to {out}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = load_experiment_config(args.config)
    out = _resolve_out(args.out, cfg.output_dir)
    data = load_dataset(cfg.dataset)
    single = replace(
        cfg.build_config_for(data), num_members=1, training_thresholds=()
    )
    manifest, report = build_ensemble(
        data,
        single,
        default_runtime=RuntimeConfig.homogeneous(0.5, 1),
        histogram_bins=cfg.histogram_bins,
    )
    save_manifest(manifest, out)
    cls, top, _ = member_prediction_arrays(manifest.members[0], data.features)
    correct = cls == data.labels
    accuracy = float(correct.mean())
    calibration = expected_calibration_error(top, correct, num_bins=cfg.calibration_bins)
    _write_json(
        out / "baseline.json",
        {
            "accuracy": accuracy,
            "ece": calibration.ece,
            "num_samples": len(data),
            "final_loss": report.members[0].final_loss,
            "dataset_id": data.id,
            "dataset_digest": data.digest(),
        },
    )
    print(f"baseline accuracy {accuracy:.4f}, ece {calibration.ece:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conf-ensemble",
        description="Confidence-gated sequential ensembles: build, cascade, report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="train an ensemble from a config file")
    p_build.add_argument("--config", required=True)
    p_build.add_argument("--out", default=None)
    p_build.set_defaults(func=cmd_build)

    p_eval = sub.add_parser("evaluate", help="run the cascade over a dataset")
    p_eval.add_argument("--ensemble", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--runtime-thresholds", default=None,
                        help="comma list, or one value broadcast to all members")
    p_eval.add_argument("--consensus", choices=CONSENSUS_CHOICES, default=None)
    p_eval.add_argument("--calibration-bins", type=int, default=15)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_hist = sub.add_parser("histograms", help="dump one member's score histograms")
    p_hist.add_argument("--ensemble", required=True)
    p_hist.add_argument("--data", required=True)
    p_hist.add_argument("--member", type=int, required=True)
    p_hist.add_argument("--bins", type=int, default=20)
    p_hist.add_argument("--out", required=True)
    p_hist.set_defaults(func=cmd_histograms)

    p_base = sub.add_parser("baseline", help="train and score the single-model reference")
    p_base.add_argument("--config", required=True)
    p_base.add_argument("--out", default=None)
    p_base.set_defaults(func=cmd_baseline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateSubsetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DatasetParseError, InvalidViewError, EmptyTrainingSetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ManifestVersionError, ManifestDigestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STORAGE
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
