"""Cascaded inference over a trained ensemble.

A query walks the members in order.  Member k's prediction is accepted as
soon as its uncertainty is strictly below the level-k runtime threshold;
if no member is confident enough, a consensus heuristic picks among all
member predictions ("last_member" takes the final one, "most_confident"
the one with the lowest uncertainty).

Note the boundary asymmetry with training-pool selection: a sample whose
uncertainty equals the threshold exactly is not accepted here, and is
forwarded there.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .classifiers import predict_logits, predict_logits_batch
from .datasets import Dataset
from .errors import InvalidInputError
from .numerics import Prediction, softmax_batch

if TYPE_CHECKING:
    from .manifest import EnsembleManifest

CONSENSUS_LAST_MEMBER = "last_member"
CONSENSUS_MOST_CONFIDENT = "most_confident"
CONSENSUS_CHOICES = (CONSENSUS_LAST_MEMBER, CONSENSUS_MOST_CONFIDENT)


@dataclass(frozen=True)
class RuntimeConfig:
    """Per-level acceptance thresholds plus the fallback heuristic."""

    thresholds: tuple[float, ...]
    consensus: str = CONSENSUS_MOST_CONFIDENT

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not self.thresholds:
            raise InvalidInputError("runtime thresholds must be non-empty")
        for t in self.thresholds:
            if not 0.0 <= t <= 0.5:
                raise InvalidInputError(f"runtime threshold {t} outside [0, 0.5]")
        if self.consensus not in CONSENSUS_CHOICES:
            raise InvalidInputError(
                f"unknown consensus {self.consensus!r}, expected one of {CONSENSUS_CHOICES}"
            )

    @classmethod
    def homogeneous(cls, threshold: float, num_members: int,
                    consensus: str = CONSENSUS_MOST_CONFIDENT) -> "RuntimeConfig":
        return cls(thresholds=(float(threshold),) * num_members, consensus=consensus)

    def validate_for(self, num_members: int) -> None:
        if len(self.thresholds) != num_members:
            raise InvalidInputError(
                f"{len(self.thresholds)} runtime thresholds for {num_members} members"
            )


@dataclass(frozen=True)
class CascadeStep:
    member_index: int
    prediction: Prediction
    accepted: bool


@dataclass(frozen=True)
class CascadeTrace:
    """Record of every member consulted for one query, in order."""

    steps: tuple[CascadeStep, ...]
    accepted_level: int | None  # None means the consensus heuristic decided
    chosen: Prediction

    @property
    def consensus_used(self) -> bool:
        return self.accepted_level is None


def consensus_last_member(predictions: Sequence[Prediction]) -> Prediction:
    """Fall back to the final member's prediction."""
    if not predictions:
        raise InvalidInputError("consensus needs at least one prediction")
    return predictions[-1]


def consensus_most_confident(predictions: Sequence[Prediction]) -> Prediction:
    """Fall back to the lowest-uncertainty prediction; ties go to the
    earliest member."""
    if not predictions:
        raise InvalidInputError("consensus needs at least one prediction")
    best = min(range(len(predictions)), key=lambda i: (predictions[i].uncertainty, i))
    return predictions[best]


def _apply_consensus(predictions: Sequence[Prediction], consensus: str) -> Prediction:
    if consensus == CONSENSUS_LAST_MEMBER:
        return consensus_last_member(predictions)
    return consensus_most_confident(predictions)


def cascade_predict(
    manifest: "EnsembleManifest",
    rcfg: RuntimeConfig,
    features,
) -> tuple[Prediction, CascadeTrace]:
    """Classify one sample, stopping at the first confident member."""
    rcfg.validate_for(len(manifest.members))
    steps: list[CascadeStep] = []
    predictions: list[Prediction] = []
    for k, member in enumerate(manifest.members):
        pred = Prediction.from_logits(predict_logits(member, features))
        accepted = pred.uncertainty < rcfg.thresholds[k]
        steps.append(CascadeStep(member_index=k, prediction=pred, accepted=accepted))
        predictions.append(pred)
        if accepted:
            return pred, CascadeTrace(steps=tuple(steps), accepted_level=k, chosen=pred)
    chosen = _apply_consensus(predictions, rcfg.consensus)
    return chosen, CascadeTrace(steps=tuple(steps), accepted_level=None, chosen=chosen)


@dataclass(frozen=True)
class SampleOutcome:
    sample_index: int
    true_label: int
    trace: CascadeTrace

    @property
    def chosen(self) -> Prediction:
        return self.trace.chosen

    @property
    def correct(self) -> bool:
        return self.trace.chosen.class_index == self.true_label

    @property
    def answering_level(self) -> int | None:
        return self.trace.accepted_level


@dataclass(frozen=True)
class EvaluationRecord:
    """Per-sample outcomes plus member-utilization aggregates."""

    consensus: str
    thresholds: tuple[float, ...]
    outcomes: tuple[SampleOutcome, ...]
    level_counts: tuple[int, ...]  # samples resolved at each level
    consensus_count: int
    accuracy: float

    @property
    def num_samples(self) -> int:
        return len(self.outcomes)

    @property
    def level_fractions(self) -> tuple[float, ...]:
        n = max(self.num_samples, 1)
        return tuple(c / n for c in self.level_counts)

    @property
    def consensus_fraction(self) -> float:
        return self.consensus_count / max(self.num_samples, 1)

    def utilization_summary(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "level_counts": list(self.level_counts),
            "level_fractions": list(self.level_fractions),
            "consensus_count": self.consensus_count,
            "consensus_fraction": self.consensus_fraction,
        }

    def to_json_dict(self) -> dict:
        return {
            "consensus": self.consensus,
            "thresholds": list(self.thresholds),
            "accuracy": self.accuracy,
            "utilization": self.utilization_summary(),
            "samples": [
                {
                    "sample_index": o.sample_index,
                    "chosen_class": o.chosen.class_index,
                    "true_class": o.true_label,
                    "answering_level": o.answering_level,
                    "top_probability": o.chosen.top_probability,
                    "uncertainty": o.chosen.uncertainty,
                    "consulted_uncertainties": [
                        s.prediction.uncertainty for s in o.trace.steps
                    ],
                    "correct": o.correct,
                }
                for o in self.outcomes
            ],
        }

    def write_csv(self, path) -> None:
        """Per-sample CSV: index, chosen class, true class, answering level,
        uncertainty at each consulted level (blank when not consulted)."""
        num_levels = len(self.thresholds)
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sample_index", "chosen_class", "true_class", "answering_level"]
                + [f"u_level_{k}" for k in range(num_levels)]
            )
            for o in self.outcomes:
                us = {s.member_index: s.prediction.uncertainty for s in o.trace.steps}
                writer.writerow(
                    [
                        o.sample_index,
                        o.chosen.class_index,
                        o.true_label,
                        "consensus" if o.answering_level is None else o.answering_level,
                    ]
                    + [repr(us[k]) if k in us else "" for k in range(num_levels)]
                )


def batch_evaluate(
    manifest: "EnsembleManifest",
    rcfg: RuntimeConfig,
    data: Dataset,
) -> EvaluationRecord:
    """Run the cascade over a whole dataset.

    Members are evaluated level by level on the still-unresolved samples
    only, which is equivalent to cascade_predict per sample; aggregation
    is in sample-index order, so results are deterministic.
    """
    members = manifest.members
    rcfg.validate_for(len(members))
    spec0 = members[0].spec
    if data.feature_dim != spec0.input_dim:
        raise InvalidInputError(
            f"dataset feature_dim {data.feature_dim} != ensemble input_dim {spec0.input_dim}"
        )
    if data.num_classes != spec0.num_classes:
        raise InvalidInputError(
            f"dataset num_classes {data.num_classes} != ensemble num_classes {spec0.num_classes}"
        )

    n = len(data)
    num_levels = len(members)
    # Per (sample, consulted level) prediction pieces; -1 class = not consulted.
    cls = np.full((n, num_levels), -1, dtype=np.int64)
    top = np.zeros((n, num_levels))
    unc = np.zeros((n, num_levels))
    accept_level = np.full(n, -1, dtype=np.int64)

    active = np.arange(n)
    for k, member in enumerate(members):
        if active.size == 0:
            break
        probs = softmax_batch(predict_logits_batch(member, data.features[active]))
        k_cls = probs.argmax(axis=1)
        k_top = probs[np.arange(active.size), k_cls]
        k_unc = np.minimum(k_top, 1.0 - k_top)
        cls[active, k] = k_cls
        top[active, k] = k_top
        unc[active, k] = k_unc
        accepted = k_unc < rcfg.thresholds[k]
        accept_level[active[accepted]] = k
        active = active[~accepted]

    outcomes = []
    correct_count = 0
    level_counts = [0] * num_levels
    consensus_count = 0
    for i in range(n):
        lvl = int(accept_level[i])
        consulted = num_levels if lvl < 0 else lvl + 1
        steps = tuple(
            CascadeStep(
                member_index=k,
                prediction=Prediction(
                    class_index=int(cls[i, k]),
                    top_probability=float(top[i, k]),
                    uncertainty=float(unc[i, k]),
                ),
                accepted=(k == lvl),
            )
            for k in range(consulted)
        )
        if lvl >= 0:
            chosen = steps[lvl].prediction
            level_counts[lvl] += 1
            trace = CascadeTrace(steps=steps, accepted_level=lvl, chosen=chosen)
        else:
            chosen = _apply_consensus([s.prediction for s in steps], rcfg.consensus)
            consensus_count += 1
            trace = CascadeTrace(steps=steps, accepted_level=None, chosen=chosen)
        outcome = SampleOutcome(sample_index=i, true_label=int(data.labels[i]), trace=trace)
        correct_count += outcome.correct
        outcomes.append(outcome)

    return EvaluationRecord(
        consensus=rcfg.consensus,
        thresholds=rcfg.thresholds,
        outcomes=tuple(outcomes),
        level_counts=tuple(level_counts),
        consensus_count=consensus_count,
        accuracy=correct_count / n if n else 0.0,
    )
