"""
Sequence augmentation.
Every random decision is drawn once per sequence and applied to all of its
frames so the recurrent state sees a consistent scene.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import cv2
import numpy as np

from .conventions import LaneLabel, mirror
from .errors import ConfigError, LabelError


@dataclass
class AugmentConfig:
    """Augmentation toggles and probabilities"""
    enabled: bool = True
    flip_prob: float = 0.5
    jitter_prob: float = 0.5
    jitter_range: Tuple[float, float] = (0.6, 1.4)
    noise_prob: float = 0.3
    noise_std: float = 4.0
    crop_prob: float = 0.3
    max_crop: float = 0.1

    def validate(self) -> "AugmentConfig":
        for name in ("flip_prob", "jitter_prob", "noise_prob", "crop_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be a probability, got {value}")
        lo, hi = self.jitter_range
        if not 0.0 < lo <= hi:
            raise ConfigError(f"jitter_range must satisfy 0 < low <= high, got {self.jitter_range}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if not 0.0 <= self.max_crop < 0.5:
            raise ConfigError(f"max_crop must be in [0, 0.5), got {self.max_crop}")
        return self

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(enabled=False)


def flip_sequence(frames: Sequence[np.ndarray], labels: Sequence[LaneLabel]) -> Tuple[List[np.ndarray], List[LaneLabel]]:
    """Mirror every frame horizontally and swap left/right IDs."""
    return [np.ascontiguousarray(f[:, ::-1]) for f in frames], [mirror(l) for l in labels]


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _crop_resize(img: np.ndarray, left: int, keep: int) -> np.ndarray:
    h, w = img.shape[:2]
    return cv2.resize(img[:, left:left + keep], (w, h), interpolation=cv2.INTER_LINEAR)


def augment(
    frames: Sequence[np.ndarray],
    labels: Sequence[LaneLabel],
    rng: np.random.Generator,
    config: Optional[AugmentConfig] = None,
) -> Tuple[List[np.ndarray], List[LaneLabel]]:
    """
    Apply flip, brightness jitter, additive noise and crop-and-resize with
    the configured probabilities. With augmentation disabled the inputs are
    returned unchanged.
    """
    if len(frames) != len(labels):
        raise LabelError(f"{len(frames)} frames for {len(labels)} labels")
    config = config or AugmentConfig()
    frames, labels = list(frames), list(labels)
    if not config.enabled or not frames:
        return frames, labels

    flip = rng.random() < config.flip_prob
    jitter = rng.uniform(*config.jitter_range) if rng.random() < config.jitter_prob else None
    noise = rng.normal(0.0, config.noise_std, size=frames[0].shape) if rng.random() < config.noise_prob else None
    crop = None
    if rng.random() < config.crop_prob:
        width = frames[0].shape[1]
        cut = int(rng.integers(0, int(config.max_crop * width) + 1))
        if cut:
            crop = (int(rng.integers(0, cut + 1)), width - cut)

    if flip:
        frames, labels = flip_sequence(frames, labels)
    if crop is not None:
        frames = [_crop_resize(f, *crop) for f in frames]
    if jitter is not None or noise is not None:
        out = []
        for f in frames:
            x = f.astype(np.float64)
            if jitter is not None:
                x = x * jitter
            if noise is not None:
                x = x + noise
            out.append(_quantize(x))
        frames = out
    return frames, labels
