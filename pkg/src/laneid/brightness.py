"""
Brightness consistency preprocessor.

Tracks the running average perceived brightness of a stream and linearly
rescales frames that fall below it (and below an optional threshold B).
Images are uint8 arrays of shape [H, W, 3] in RGB order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ShapeError

ALPHA_CAP = 8.0
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
MEASURES = ("luma", "mean")


@dataclass
class BrightnessConfig:
    """Preprocessing settings; threshold None means no B gate"""
    enabled: bool = False
    threshold: Optional[float] = None
    measure: str = "luma"
    window: Optional[int] = None

    def validate(self) -> "BrightnessConfig":
        if self.measure not in MEASURES:
            raise ConfigError(f"unknown brightness measure '{self.measure}' (expected one of {MEASURES})")
        if self.window is not None and self.window < 1:
            raise ConfigError(f"brightness window must be >= 1, got {self.window}")
        if self.threshold is not None and not 0 <= self.threshold <= 255:
            raise ConfigError(f"brightness threshold {self.threshold} outside 0..255")
        return self

    @classmethod
    def parse(cls, value: str, **kwargs) -> "BrightnessConfig":
        """'off' disables adjustment; a number enables it with that threshold."""
        if value.strip().lower() == "off":
            return cls(enabled=False, **kwargs).validate()
        return cls(enabled=True, threshold=float(value), **kwargs).validate()

    @property
    def label(self) -> str:
        if not self.enabled:
            return "off"
        return "on" if self.threshold is None else f"{self.threshold:g}"


@dataclass(frozen=True)
class BrightnessTracker:
    """Running mean of a stream's perceived brightness"""
    mean: float = 0.0
    count: int = 0
    threshold: Optional[float] = None
    enabled: bool = True
    measure: str = "luma"
    window: Optional[int] = None
    history: Tuple[float, ...] = field(default=(), repr=False)


def new_tracker(config: BrightnessConfig) -> BrightnessTracker:
    config.validate()
    return BrightnessTracker(
        threshold=config.threshold, enabled=config.enabled, measure=config.measure, window=config.window
    )


def _check_image(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an [H, W, 3] image, got shape {img.shape}")


def perceived_brightness(img: np.ndarray, measure: str = "luma") -> float:
    """Mean Rec.601 luma (or plain RGB mean) over all pixels."""
    _check_image(img)
    pixels = img.reshape(-1, 3).astype(np.float64)
    if measure == "luma":
        return float((pixels @ LUMA_WEIGHTS).mean())
    if measure == "mean":
        return float(pixels.mean())
    raise ConfigError(f"unknown brightness measure '{measure}'")


def update_tracker(tracker: BrightnessTracker, b: float) -> BrightnessTracker:
    """Fold one brightness sample into the running (or windowed) mean."""
    if not 0.0 <= b <= 255.0:
        raise ValueError(f"brightness sample {b} outside 0..255")
    if tracker.window is None:
        mean = (tracker.mean * tracker.count + b) / (tracker.count + 1)
        return replace(tracker, mean=mean, count=tracker.count + 1)
    history = (tracker.history + (b,))[-tracker.window:]
    return replace(tracker, mean=sum(history) / len(history), count=tracker.count + 1, history=history)


def adjust(img: np.ndarray, tracker: BrightnessTracker) -> Tuple[np.ndarray, bool, BrightnessTracker]:
    """
    Rescale a frame darker than the tracked mean.

    Fires when enabled, the tracker holds at least one sample, b_I < mean and
    b_I < threshold (if set). alpha = mean / max(b_I, 1), capped at 8; pixels
    become min(255, round(alpha * p)). The tracker is updated with the
    original b_I either way.

    Returns:
        (image, fired, updated tracker)
    """
    b = perceived_brightness(img, tracker.measure)
    fire = bool(
        tracker.enabled
        and tracker.count >= 1
        and b < tracker.mean
        and (tracker.threshold is None or b < tracker.threshold)
    )
    out = img
    if fire:
        alpha = min(ALPHA_CAP, tracker.mean / max(b, 1.0))
        out = np.minimum(255.0, np.rint(alpha * img.astype(np.float64))).astype(np.uint8)
    return out, fire, update_tracker(tracker, b)


def adjust_stream(
    frames: Sequence[np.ndarray], config: BrightnessConfig
) -> Tuple[List[np.ndarray], List[bool]]:
    """Run a fresh tracker over one sequence."""
    tracker = new_tracker(config)
    adjusted, fired = [], []
    for frame in frames:
        out, hit, tracker = adjust(frame, tracker)
        adjusted.append(out)
        fired.append(hit)
    return adjusted, fired
