"""Exception hierarchy shared by the SDK and mapped to exit codes by the CLI."""

from pathlib import Path
from typing import Optional


class RidnetError(Exception):
    """Base class for all errors raised by ridnet."""


class ShapeError(RidnetError, ValueError):
    """Raised when tensor shapes are inconsistent with an operation."""


class GraphConstructionError(RidnetError, ValueError):
    """Raised when a similarity graph cannot be built from its inputs."""


class VolumeFormatError(RidnetError):
    """Raised when a volume file or its sidecar cannot be read."""


class CheckpointError(RidnetError):
    """Raised when a checkpoint manifest or blob is malformed."""


class NumericalFailure(RidnetError):
    """
    Raised when training produces a non-finite loss or gradient.

    Carries the step index and the last checkpoint that was written before
    the failure so callers can resume or report.
    """

    def __init__(self, message: str, step: int, last_checkpoint: Optional[Path] = None):
        super().__init__(message)
        self.step = step
        self.last_checkpoint = last_checkpoint
