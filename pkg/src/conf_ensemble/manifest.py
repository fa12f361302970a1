"""In-memory description of a trained ensemble."""

from __future__ import annotations

from dataclasses import dataclass

from .cascade import RuntimeConfig
from .classifiers import TrainedModel
from .errors import InvalidInputError

FORMAT_VERSION = 1

SELECTION_NESTED = "nested"
SELECTION_REBASED = "rebased"
SELECTION_RULES = (SELECTION_NESTED, SELECTION_REBASED)


@dataclass(frozen=True, eq=False)
class EnsembleManifest:
    """Ordered members plus the schedules and provenance needed to rerun
    or audit them.  Member position in the tuple is its cascade level."""

    members: tuple[TrainedModel, ...]
    selection_rule: str
    training_thresholds: tuple[float, ...]
    default_runtime: RuntimeConfig
    dataset_id: str
    dataset_digest: str
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if not self.members:
            raise InvalidInputError("an ensemble needs at least one member")
        if self.selection_rule not in SELECTION_RULES:
            raise InvalidInputError(f"unknown selection rule {self.selection_rule!r}")
        if len(self.training_thresholds) != len(self.members) - 1:
            raise InvalidInputError(
                f"{len(self.training_thresholds)} training thresholds "
                f"for {len(self.members)} members; need one per level >= 1"
            )
        self.default_runtime.validate_for(len(self.members))
        first = self.members[0].spec
        for member in self.members:
            if (member.spec.input_dim, member.spec.num_classes) != (
                first.input_dim,
                first.num_classes,
            ):
                raise InvalidInputError("all members must share input_dim and num_classes")

    @property
    def num_members(self) -> int:
        return len(self.members)
