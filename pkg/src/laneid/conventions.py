"""
Lane ID conventions.

A lane is numbered from the left border (delta_l) and from the right border
(delta_r); with the lane count L_c the two satisfy delta_r = L_c - delta_l + 1.
IDs are 1-based everywhere except at the model boundary, where ID k is class
k - 1. That mapping lives only here.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from enum import Enum

import torch

from .errors import LabelError

MAX_LANES = 8


class Convention(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def other(self) -> "Convention":
        return Convention.RIGHT if self is Convention.LEFT else Convention.LEFT


def _check_range(name: str, value: int, upper: int = MAX_LANES) -> None:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise LabelError(f"{name} must be an integer, got {value!r}")
    if not 1 <= value <= upper:
        raise LabelError(f"{name}={value} outside 1..{upper}")


def right_from_left(delta_l: int, lane_count: int) -> int:
    """Right-convention ID of the lane numbered `delta_l` from the left."""
    _check_range("lane_count", lane_count)
    _check_range("delta_l", delta_l, lane_count)
    return lane_count - delta_l + 1


def left_from_right(delta_r: int, lane_count: int) -> int:
    _check_range("lane_count", lane_count)
    _check_range("delta_r", delta_r, lane_count)
    return lane_count - delta_r + 1


@dataclass(frozen=True)
class LaneLabel:
    """Ground truth for one frame"""
    delta_l: int
    delta_r: int
    lane_count: int

    def __post_init__(self):
        _check_range("lane_count", self.lane_count)
        _check_range("delta_l", self.delta_l, self.lane_count)
        _check_range("delta_r", self.delta_r, self.lane_count)
        if self.delta_r != self.lane_count - self.delta_l + 1:
            raise LabelError(
                f"inconsistent label ({self.delta_l}, {self.delta_r}, {self.lane_count}): "
                f"expected delta_r={self.lane_count - self.delta_l + 1}"
            )
        for name in ("delta_l", "delta_r", "lane_count"):
            object.__setattr__(self, name, int(getattr(self, name)))

    @classmethod
    def from_left(cls, delta_l: int, lane_count: int) -> "LaneLabel":
        return cls(delta_l, right_from_left(delta_l, lane_count), lane_count)

    def id_for(self, convention: Convention) -> int:
        return self.delta_l if convention is Convention.LEFT else self.delta_r

    def as_dict(self) -> dict:
        return {"delta_l": self.delta_l, "delta_r": self.delta_r, "lane_count": self.lane_count}


def mirror(label: LaneLabel) -> LaneLabel:
    """Label of the horizontally flipped scene: left and right swap."""
    return LaneLabel(label.delta_r, label.delta_l, label.lane_count)


def triangular_residual(s_l, s_r, s_c):
    """Signed residual s_r - s_c + s_l - 1; zero for a consistent triple."""
    return s_r - s_c + s_l - 1


def id_to_class(lane_id: int) -> int:
    _check_range("lane id", lane_id)
    return lane_id - 1


def class_to_id(index: int) -> int:
    if not 0 <= index < MAX_LANES:
        raise LabelError(f"class index {index} outside 0..{MAX_LANES - 1}")
    return index + 1


def one_hot(lane_id: int, num_classes: int = MAX_LANES) -> torch.Tensor:
    """Float64 one-hot target for a 1-based ID."""
    y = torch.zeros(num_classes, dtype=torch.float64)
    y[id_to_class(lane_id)] = 1.0
    return y
