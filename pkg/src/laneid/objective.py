"""
Training objective: weighted cross-entropy for both conventions, plain
cross-entropy for the lane count, and the triangular consistency constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import torch

from .conventions import LaneLabel, one_hot, triangular_residual
from .errors import LabelError, NonFiniteError
from .model import ModelOutput
from .numerics import Tensor

PROB_FLOOR = 1e-12


@dataclass
class LossBreakdown:
    ce_left: Tensor
    ce_right: Tensor
    ce_count: Tensor
    w_left: float
    w_right: float
    constraint: Tensor
    total: Tensor

    def as_dict(self) -> Dict[str, float]:
        return {
            "ce_left": float(self.ce_left),
            "ce_right": float(self.ce_right),
            "ce_count": float(self.ce_count),
            "w_left": self.w_left,
            "w_right": self.w_right,
            "constraint": float(self.constraint),
            "total": float(self.total),
        }


def cross_entropy(p: Tensor, y: Tensor) -> Tensor:
    """-sum y_i log(max(p_i, 1e-12)) against a one-hot target."""
    if p.shape != y.shape:
        raise LabelError(f"target shape {tuple(y.shape)} differs from prediction shape {tuple(p.shape)}")
    ones = int((y == 1).sum())
    zeros = int((y == 0).sum())
    if ones != 1 or ones + zeros != y.numel():
        raise LabelError(f"target is not one-hot: {y.tolist()}")
    return -(y * torch.log(torch.clamp(p, min=PROB_FLOOR))).sum()


def adaptive_weight(z: float, z_offset: float = 0.0) -> float:
    """1 + exp(-5 (z - z_offset)); a constant, no gradient flows through z."""
    return 1.0 + math.exp(-5.0 * (float(z) - z_offset))


def scalar_estimate(p: Tensor, mode: str = "expectation"):
    """
    1-based scalar ID from a probability vector.

    expectation: sum (k + 1) p_k, differentiable tensor
    argmax:      1 + index of the maximum, ties to the smaller index (int)
    """
    if mode == "expectation":
        ids = torch.arange(1, p.shape[0] + 1, dtype=p.dtype)
        return (ids * p).sum()
    if mode == "argmax":
        # torch.argmax does not promise the first maximum; take it explicitly.
        values = p.detach()
        if not bool(torch.isfinite(values).all()):
            raise NonFiniteError(f"argmax of non-finite probabilities: {values.tolist()}")
        return int(torch.nonzero(values == values.max())[0, 0]) + 1
    raise ValueError(f"Unknown scalar estimate mode '{mode}'")


def total_loss(
    output: ModelOutput,
    label: LaneLabel,
    z_offset: float = 0.0,
    weights: Optional[Tuple[float, float]] = None,
) -> LossBreakdown:
    """
    w_l * CE(left) + w_r * CE(right) + CE(count) + |triangular residual|.

    Adaptive weights come from the argmax IDs unless `weights` pins them; the
    constraint uses the differentiable expectation estimates.
    """
    for name, p in (("left", output.left_probs), ("right", output.right_probs), ("count", output.count_probs)):
        if not bool(torch.isfinite(p.detach()).all()):
            raise NonFiniteError(f"non-finite {name} probabilities: {p.detach().tolist()}")
    n = output.left_probs.shape[0]
    ce_left = cross_entropy(output.left_probs, one_hot(label.delta_l, n))
    ce_right = cross_entropy(output.right_probs, one_hot(label.delta_r, n))
    ce_count = cross_entropy(output.count_probs, one_hot(label.lane_count, n))
    if weights is None:
        w_left = adaptive_weight(scalar_estimate(output.left_probs, "argmax"), z_offset)
        w_right = adaptive_weight(scalar_estimate(output.right_probs, "argmax"), z_offset)
    else:
        w_left, w_right = weights
    s_l = scalar_estimate(output.left_probs, "expectation")
    s_r = scalar_estimate(output.right_probs, "expectation")
    s_c = scalar_estimate(output.count_probs, "expectation")
    constraint = torch.abs(triangular_residual(s_l, s_r, s_c))
    total = w_left * ce_left + w_right * ce_right + ce_count + constraint
    return LossBreakdown(ce_left, ce_right, ce_count, w_left, w_right, constraint, total)


def frozen_weights(output: ModelOutput, z_offset: float = 0.0) -> Tuple[float, float]:
    """The adaptive weights total_loss would pick for this output."""
    return (
        adaptive_weight(scalar_estimate(output.left_probs, "argmax"), z_offset),
        adaptive_weight(scalar_estimate(output.right_probs, "argmax"), z_offset),
    )


def sequence_loss(
    outputs: Sequence[ModelOutput],
    labels: Sequence[LaneLabel],
    z_offset: float = 0.0,
    weights: Optional[Sequence[Tuple[float, float]]] = None,
) -> Tuple[Tensor, Dict[str, float]]:
    """Mean total loss over frames and the mean of each breakdown term."""
    if len(outputs) != len(labels) or not outputs:
        raise LabelError(f"{len(outputs)} outputs for {len(labels)} labels")
    parts = [
        total_loss(out, lab, z_offset, None if weights is None else weights[k])
        for k, (out, lab) in enumerate(zip(outputs, labels))
    ]
    total = torch.stack([p.total for p in parts]).mean()
    summary: Dict[str, float] = {}
    for p in parts:
        for key, value in p.as_dict().items():
            summary[key] = summary.get(key, 0.0) + value / len(parts)
    return total, summary
