"""
Convention decision module.
Picks one of the two per-convention IDs for each frame by comparing a
confidence score of each probability vector, each weighted by a penalty on
frame-to-frame jumps within that convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .conventions import MAX_LANES, Convention
from .errors import ConfigError

PROB_FLOOR = 1e-12


class DecisionCriterion(str, Enum):
    MAX = "max"
    MAX_MINUS_MEAN = "max-m"
    ENTROPY = "e"
    MAX_MINUS_ENTROPY = "max-e"
    ZSCORE = "z-score"

    @classmethod
    def from_name(cls, name: str) -> "DecisionCriterion":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown decision criterion '{name}' (expected one of {[c.value for c in cls]})")


@dataclass
class DecisionConfig:
    criterion: str = DecisionCriterion.MAX_MINUS_MEAN.value
    entropy_sign: int = -1
    temporal_penalty: bool = True

    def validate(self) -> "DecisionConfig":
        DecisionCriterion.from_name(self.criterion)
        if self.entropy_sign not in (-1, 1):
            raise ConfigError(f"entropy_sign must be -1 or 1, got {self.entropy_sign}")
        return self


@dataclass(frozen=True)
class DecisionState:
    """Previous raw argmax ID per convention; None at stream start"""
    left: Optional[int] = None
    right: Optional[int] = None


@dataclass
class FinalEstimate:
    convention: Convention
    lane_id: int
    lane_count: int
    companion_id: int
    score_left: float
    score_right: float
    left_id: int
    right_id: int

    def as_dict(self) -> dict:
        return {
            "convention": self.convention.value,
            "lane_id": self.lane_id,
            "lane_count": self.lane_count,
            "companion_id": self.companion_id,
            "score_left": self.score_left,
            "score_right": self.score_right,
        }


def _argmax_id(p: np.ndarray) -> int:
    # np.argmax returns the first maximum, so ties go to the smaller ID.
    return int(np.argmax(p)) + 1


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    return float(-(p * np.log(np.maximum(p, PROB_FLOOR))).sum())


def criterion_score(p, criterion: DecisionCriterion, entropy_sign: int = -1) -> float:
    """Confidence of a probability vector; higher means more confident."""
    p = np.asarray(p, dtype=np.float64)
    top = float(p.max())
    if criterion is DecisionCriterion.MAX:
        return top
    if criterion is DecisionCriterion.MAX_MINUS_MEAN:
        return top - float(p.mean())
    if criterion is DecisionCriterion.ENTROPY:
        return entropy_sign * entropy(p)
    if criterion is DecisionCriterion.MAX_MINUS_ENTROPY:
        return top - entropy(p)
    if criterion is DecisionCriterion.ZSCORE:
        return (top - float(p.mean())) / max(float(p.std()), PROB_FLOOR)
    raise ConfigError(f"unsupported criterion {criterion!r}")


def temporal_penalty(o_t: int, o_prev: Optional[int]) -> float:
    """1 / (1 + |o_t - o_prev|), or 1 without a previous output."""
    if o_prev is None:
        return 1.0
    return 1.0 / (1.0 + abs(o_t - o_prev))


def penalized(score: float, penalty: float) -> float:
    """Lower a score by a penalty factor in (0, 1]; negative scores are divided so they move away from 0."""
    return score * penalty if score >= 0 else score / penalty


def decide(
    left,
    right,
    count,
    state: DecisionState,
    criterion: DecisionCriterion = DecisionCriterion.MAX_MINUS_MEAN,
    entropy_sign: int = -1,
    use_penalty: bool = True,
) -> Tuple[FinalEstimate, DecisionState]:
    """
    Choose the convention whose penalty-weighted score is higher (ties go
    Left). Both raw argmaxes are recorded in the new state regardless of the
    winner.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    o_left, o_right = _argmax_id(left), _argmax_id(right)
    lane_count = _argmax_id(np.asarray(count, dtype=np.float64))

    score_left = criterion_score(left, criterion, entropy_sign)
    score_right = criterion_score(right, criterion, entropy_sign)
    if use_penalty:
        score_left = penalized(score_left, temporal_penalty(o_left, state.left))
        score_right = penalized(score_right, temporal_penalty(o_right, state.right))

    if score_left >= score_right:
        convention, lane_id = Convention.LEFT, o_left
    else:
        convention, lane_id = Convention.RIGHT, o_right
    companion = min(MAX_LANES, max(1, lane_count - lane_id + 1))

    estimate = FinalEstimate(
        convention=convention,
        lane_id=lane_id,
        lane_count=lane_count,
        companion_id=companion,
        score_left=score_left,
        score_right=score_right,
        left_id=o_left,
        right_id=o_right,
    )
    return estimate, DecisionState(left=o_left, right=o_right)


def decide_stream(
    outputs: Iterable[Tuple[np.ndarray, np.ndarray, np.ndarray]],
    config: DecisionConfig,
) -> List[FinalEstimate]:
    """Decide every frame of one sequence from a fresh state."""
    config.validate()
    criterion = DecisionCriterion.from_name(config.criterion)
    state = DecisionState()
    estimates = []
    for left, right, count in outputs:
        estimate, state = decide(left, right, count, state, criterion, config.entropy_sign, config.temporal_penalty)
        estimates.append(estimate)
    return estimates
