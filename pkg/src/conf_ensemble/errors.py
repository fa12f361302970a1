"""Exception hierarchy shared across the package.

Error classes map onto CLI exit codes (see cli.py), so keep the
partition coarse: config, data, degenerate build, storage.
"""

from __future__ import annotations


class ConfEnsembleError(Exception):
    """Base class for all library errors."""


class InvalidInputError(ConfEnsembleError):
    """A value violates an operation's precondition (bad shape, range, NaN...)."""


class ConfigError(ConfEnsembleError):
    """Experiment configuration failed to parse or validate."""


class DatasetParseError(ConfEnsembleError):
    """A dataset file is malformed; message names the offending row/record."""


class InvalidViewError(ConfEnsembleError):
    """A subset view does not match the dataset it is applied to."""


class EmptyTrainingSetError(ConfEnsembleError):
    """Training was requested on an empty dataset."""


class DegenerateSubsetError(ConfEnsembleError):
    """A selected training subset fell below the minimum viable size."""

    def __init__(self, level: int, size: int, minimum: int):
        self.level = level
        self.size = size
        self.minimum = minimum
        super().__init__(
            f"training subset at level {level} has {size} samples, "
            f"below the minimum of {minimum}"
        )


class ManifestVersionError(ConfEnsembleError):
    """Stored ensemble uses an unsupported format version."""


class ManifestDigestError(ConfEnsembleError):
    """Stored weights or manifest do not match their recorded digest."""
