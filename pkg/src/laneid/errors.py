"""
Exception hierarchy.
Every failure raised by the library derives from LaneIdError so the CLI can
report it uniformly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional


class LaneIdError(Exception):
    """Base class for all library errors"""


class ShapeError(LaneIdError, ValueError):
    """Operand shapes disagree; the message names the offending dimension"""


class LabelError(LaneIdError, ValueError):
    """Lane label or one-hot target out of range"""


class NonFiniteError(LaneIdError, FloatingPointError):
    """NaN or infinity met where finite values are required"""


class GradientCheckError(LaneIdError):
    """Finite-difference verification could not be carried out"""


class ConfigError(LaneIdError, ValueError):
    """Malformed or inconsistent configuration"""


class SceneError(LaneIdError, ValueError):
    """Invalid synthetic scene specification"""


class CorpusError(LaneIdError, OSError):
    """Corpus could not be written or read"""

    def __init__(self, message: str, path: Optional[Path] = None):
        self.path = path
        super().__init__(f"{message} [{path}]" if path is not None else message)


class CheckpointError(LaneIdError):
    """Checkpoint file could not be decoded"""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"checkpoint format version {found} is not supported (expected version {expected})")


class TruncatedDataError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError, ShapeError):
    pass


class TrainingAbortedError(LaneIdError):
    """Training stopped on a non-finite loss; a checkpoint was written first"""

    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        self.checkpoint = checkpoint
        super().__init__(message)
