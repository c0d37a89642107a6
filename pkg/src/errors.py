"""Exception hierarchy for syn2real.

Every error carries the CLI exit code it maps to, so the command-line
layer can translate failures without inspecting messages.
"""
from pathlib import Path
from typing import Optional


class Syn2RealError(Exception):
    """Base class for all domain errors."""

    exit_code = 1


class ConfigurationError(Syn2RealError, ValueError):
    """Invalid configuration value or inconsistent configs."""

    exit_code = 2


class StaleArtifactError(ConfigurationError):
    """A cached stage output exists but does not match the requested config."""


class DataError(Syn2RealError):
    """Problem with dataset content or availability."""

    exit_code = 3


class FormatError(DataError):
    """A file on disk does not follow the expected layout."""


class ShapeError(DataError, ValueError):
    """Array or tensor dimensions violate an operation's precondition."""


class PatchSizeError(ShapeError):
    """Requested patch or resize target does not fit."""


class LocationError(ShapeError, IndexError):
    """Sampled feature location outside the feature map."""


class HistoryLengthError(DataError):
    """Not enough recorded epochs for the requested window."""


class TrainingAbortedError(Syn2RealError):
    """Training stopped on a non-finite loss."""

    exit_code = 4

    def __init__(self, message: str, diagnostic_checkpoint: Optional[Path] = None):
        super().__init__(message)
        self.diagnostic_checkpoint = diagnostic_checkpoint


class StageError(Syn2RealError):
    """A pipeline stage failed; wraps the original error."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
