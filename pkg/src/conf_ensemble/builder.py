"""Sequential ensemble construction.

Member 0 trains on the full dataset.  Each later member trains on the
samples its predecessor scored as uncertain (uncertainty strictly above
the level's training threshold).  Two ways to pick that pool:

  * nested  — filter the predecessor's own training pool, so pools can
              only shrink level over level;
  * rebased — filter the original full pool with the predecessor's
              scores, trading pool purity for pool size.

The two rules coincide at level 1.  Builds are deterministic: member s
derives its init and shuffling seeds from the configured seeds plus s.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, replace

import numpy as np

from .cascade import RuntimeConfig
from .classifiers import (
    ClassifierSpec,
    TrainConfig,
    TrainedModel,
    fit,
    init_model,
    predict_logits_batch,
)
from .datasets import Dataset, SubsetView, materialize
from .errors import DegenerateSubsetError, InvalidInputError, InvalidViewError
from .manifest import (
    FORMAT_VERSION,
    SELECTION_NESTED,
    SELECTION_REBASED,
    SELECTION_RULES,
    EnsembleManifest,
)
from .metrics import (
    DEFAULT_HISTOGRAM_BINS,
    SCORE_KIND_TOP_PROBABILITY,
    SCORE_KIND_UNCERTAINTY,
    ScoreHistogram,
    score_histogram,
)
from .numerics import softmax_batch

DEFAULT_RUNTIME_THRESHOLD = 0.2


def default_min_subset_size(num_classes: int) -> int:
    """Small enough to allow aggressive filtering, large enough that every
    class can plausibly still appear."""
    return max(num_classes * 2, 10)


@dataclass(frozen=True)
class BuildConfig:
    num_members: int
    training_thresholds: tuple[float, ...]
    classifier_spec: ClassifierSpec
    train_config: TrainConfig
    selection_rule: str = SELECTION_NESTED
    min_subset_size: int | None = None  # None -> default_min_subset_size

    def __post_init__(self):
        object.__setattr__(
            self, "training_thresholds", tuple(float(t) for t in self.training_thresholds)
        )
        if self.num_members < 1:
            raise InvalidInputError(f"num_members must be >= 1, got {self.num_members}")
        if len(self.training_thresholds) != self.num_members - 1:
            raise InvalidInputError(
                f"need exactly {self.num_members - 1} training thresholds, "
                f"got {len(self.training_thresholds)}"
            )
        for t in self.training_thresholds:
            if not 0.0 <= t <= 0.5:
                raise InvalidInputError(f"training threshold {t} outside [0, 0.5]")
        if self.selection_rule not in SELECTION_RULES:
            raise InvalidInputError(f"unknown selection rule {self.selection_rule!r}")
        if self.min_subset_size is not None and self.min_subset_size < 1:
            raise InvalidInputError("min_subset_size must be >= 1")

    def resolved_min_subset_size(self) -> int:
        if self.min_subset_size is not None:
            return self.min_subset_size
        return default_min_subset_size(self.classifier_spec.num_classes)


def member_prediction_arrays(
    member: TrainedModel, features
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(predicted class, top probability, uncertainty) per feature row."""
    probs = softmax_batch(predict_logits_batch(member, features))
    cls = probs.argmax(axis=1)
    top = probs[np.arange(probs.shape[0]), cls]
    return cls, top, np.minimum(top, 1.0 - top)


def member_uncertainty_scores(member: TrainedModel, features) -> np.ndarray:
    """Uncertainty of a member's prediction for each feature row."""
    probs = softmax_batch(predict_logits_batch(member, features))
    top = probs.max(axis=1)
    return np.minimum(top, 1.0 - top)


def _filter_pool(
    pool: SubsetView, member: TrainedModel, threshold: float, parent: Dataset
) -> SubsetView:
    if not 0.0 <= threshold <= 0.5:
        raise InvalidInputError(f"training threshold {threshold} outside [0, 0.5]")
    if pool.parent_id != parent.id:
        raise InvalidViewError(
            f"pool targets dataset {pool.parent_id!r}, got {parent.id!r}"
        )
    if not pool.indices:
        return SubsetView(parent_id=parent.id, indices=())
    idx = np.asarray(pool.indices, dtype=np.int64)
    scores = member_uncertainty_scores(member, parent.features[idx])
    kept = idx[scores > threshold]  # strict: boundary samples are not forwarded
    return SubsetView(parent_id=parent.id, indices=tuple(int(i) for i in kept))


def select_next_subset_nested(
    prev_pool: SubsetView, member: TrainedModel, threshold: float, parent: Dataset
) -> SubsetView:
    """Keep the samples of the previous pool the member is uncertain about."""
    return _filter_pool(prev_pool, member, threshold, parent)


def select_next_subset_rebased(
    full_pool: SubsetView, member: TrainedModel, threshold: float, parent: Dataset
) -> SubsetView:
    """Keep the samples of the ORIGINAL full pool the member is uncertain
    about; the result need not be contained in the member's own pool."""
    return _filter_pool(full_pool, member, threshold, parent)


def indices_file_content(indices: tuple[int, ...]) -> str:
    """Newline-delimited integers; also the payload behind index digests."""
    return "".join(f"{i}\n" for i in indices)


def _indices_digest(indices: tuple[int, ...]) -> str:
    return hashlib.sha256(indices_file_content(indices).encode()).hexdigest()


@dataclass(frozen=True)
class MemberBuildRecord:
    level: int
    subset_size: int
    subset_indices: tuple[int, ...]
    index_digest: str
    train_seconds: float
    final_loss: float
    uncertainty_histogram: ScoreHistogram  # member's scores over the full dataset
    probability_histogram: ScoreHistogram

    def to_json_dict(self) -> dict:
        return {
            "level": self.level,
            "subset_size": self.subset_size,
            "index_digest": self.index_digest,
            "train_seconds": self.train_seconds,
            "final_loss": self.final_loss,
            "uncertainty_histogram": self.uncertainty_histogram.to_json_dict(),
            "probability_histogram": self.probability_histogram.to_json_dict(),
        }


@dataclass(frozen=True)
class BuildReport:
    selection_rule: str
    dataset_id: str
    dataset_digest: str
    members: tuple[MemberBuildRecord, ...]

    def subset_sizes(self) -> tuple[int, ...]:
        return tuple(m.subset_size for m in self.members)

    def to_json_dict(self) -> dict:
        return {
            "selection_rule": self.selection_rule,
            "dataset_id": self.dataset_id,
            "dataset_digest": self.dataset_digest,
            "subset_sizes": list(self.subset_sizes()),
            "members": [m.to_json_dict() for m in self.members],
        }


def member_report(
    level: int,
    pool: SubsetView,
    model: TrainedModel,
    data: Dataset,
    train_seconds: float,
    histogram_bins: int = DEFAULT_HISTOGRAM_BINS,
) -> MemberBuildRecord:
    """Build-report entry for one member, scored over the full dataset."""
    predicted, top, unc = member_prediction_arrays(model, data.features)
    correct = predicted == data.labels
    return MemberBuildRecord(
        level=level,
        subset_size=len(pool),
        subset_indices=pool.indices,
        index_digest=_indices_digest(pool.indices),
        train_seconds=train_seconds,
        final_loss=model.final_loss if model.final_loss is not None else float("nan"),
        uncertainty_histogram=score_histogram(
            unc, correct, kind=SCORE_KIND_UNCERTAINTY, bins=histogram_bins
        ),
        probability_histogram=score_histogram(
            top, correct, kind=SCORE_KIND_TOP_PROBABILITY, bins=histogram_bins
        ),
    )


def build_ensemble(
    data: Dataset,
    cfg: BuildConfig,
    default_runtime: RuntimeConfig | None = None,
    histogram_bins: int = DEFAULT_HISTOGRAM_BINS,
) -> tuple[EnsembleManifest, BuildReport]:
    """Train the full member chain.

    Raises DegenerateSubsetError as soon as a selected pool falls below
    the minimum size, naming the level; nothing is silently truncated.
    """
    if len(data) == 0:
        raise InvalidInputError("cannot build an ensemble on an empty dataset")
    spec = cfg.classifier_spec
    if data.feature_dim != spec.input_dim:
        raise InvalidInputError(
            f"dataset feature_dim {data.feature_dim} != spec input_dim {spec.input_dim}"
        )
    if data.num_classes != spec.num_classes:
        raise InvalidInputError(
            f"dataset num_classes {data.num_classes} != spec num_classes {spec.num_classes}"
        )
    min_size = cfg.resolved_min_subset_size()

    full_pool = data.all_indices()
    pool = full_pool
    members: list[TrainedModel] = []
    records: list[MemberBuildRecord] = []
    for level in range(cfg.num_members):
        if level > 0:
            threshold = cfg.training_thresholds[level - 1]
            source = pool if cfg.selection_rule == SELECTION_NESTED else full_pool
            pool = _filter_pool(source, members[-1], threshold, data)
            if len(pool) < min_size:
                raise DegenerateSubsetError(level=level, size=len(pool), minimum=min_size)
        member_spec = replace(spec, seed=spec.seed + level)
        member_train = replace(cfg.train_config, seed=cfg.train_config.seed + level)
        started = time.perf_counter()
        model = fit(init_model(member_spec), materialize(pool, data), member_train)
        elapsed = time.perf_counter() - started
        members.append(model)
        records.append(
            member_report(level, pool, model, data, elapsed, histogram_bins)
        )

    runtime = default_runtime or RuntimeConfig.homogeneous(
        DEFAULT_RUNTIME_THRESHOLD, cfg.num_members
    )
    manifest = EnsembleManifest(
        members=tuple(members),
        selection_rule=cfg.selection_rule,
        training_thresholds=cfg.training_thresholds,
        default_runtime=runtime,
        dataset_id=data.id,
        dataset_digest=data.digest(),
        format_version=FORMAT_VERSION,
    )
    report = BuildReport(
        selection_rule=cfg.selection_rule,
        dataset_id=data.id,
        dataset_digest=data.digest(),
        members=tuple(records),
    )
    return manifest, report
