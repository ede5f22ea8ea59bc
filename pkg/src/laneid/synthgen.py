"""
Synthetic Road Scene Module
Renders labeled multi-lane road sequences: a straight road seen by a fixed
forward camera, solid white borders, dashed dividers, ambient brightness
events (tunnels) and moving gray occluders.

Geometry: the road is flat, lanes have unit width and the camera sits over
the centre of the ego lane. A road line k (k = 0 is the left border,
k = lane_count the right border) projects at row y to column
    u_k(y) = cx + (k - ego + 0.5) * s(y),   s(y) = S * (y - y_h) / (H - 1 - y_h)
with y_h the horizon row and S the lane width in pixels on the bottom row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .conventions import MAX_LANES, LaneLabel
from .errors import SceneError

GENERATOR_VERSION = "1.0"
PROFILES = ("train", "test", "tunnel-test")

HORIZON_FRACTION = 0.4
BOTTOM_LANE_FRACTION = 0.35
LINE_WIDTH = 0.08          # in lane widths
DASH_FREQUENCY = 2.0       # dash periods per unit of depth
DASH_SPEED = 0.35          # dash phase advance per frame
MAX_OCCLUDERS = 8

SKY = (150.0, 180.0, 210.0)
GRASS = (60.0, 110.0, 50.0)
ASPHALT = (80.0, 80.0, 85.0)
PAINT = (245.0, 245.0, 245.0)
OCCLUDER = (128.0, 128.0, 128.0)


@dataclass(frozen=True)
class SceneSpec:
    """
    One synthetic sequence.

    ego_schedule holds (frame, lane) change points starting at frame 0;
    brightness_profile holds half-open (start, end, level) intervals, frames
    outside every interval use `ambient`.
    """
    seed: int
    lane_count: int
    frames: int
    ego_schedule: Tuple[Tuple[int, int], ...]
    brightness_profile: Tuple[Tuple[int, int, int], ...] = ()
    occlusion_density: float = 0.0
    height: int = 64
    width: int = 128
    ambient: int = 255

    def __post_init__(self):
        object.__setattr__(self, "ego_schedule", tuple(tuple(int(v) for v in p) for p in self.ego_schedule))
        object.__setattr__(
            self, "brightness_profile", tuple(tuple(int(v) for v in p) for p in self.brightness_profile)
        )

    def validate(self) -> "SceneSpec":
        if self.seed < 0:
            raise SceneError(f"scene seed must be >= 0, got {self.seed}")
        if not 1 <= self.lane_count <= MAX_LANES:
            raise SceneError(f"lane_count {self.lane_count} outside 1..{MAX_LANES}")
        if self.frames < 1:
            raise SceneError(f"frames must be >= 1, got {self.frames}")
        if self.height < 8 or self.width < 8:
            raise SceneError(f"image {self.height}x{self.width} is too small")
        if not 0.0 <= self.occlusion_density <= 1.0:
            raise SceneError(f"occlusion density {self.occlusion_density} outside 0..1")
        if not 0 <= self.ambient <= 255:
            raise SceneError(f"ambient level {self.ambient} outside 0..255")

        schedule = self.ego_schedule
        if not schedule or schedule[0][0] != 0:
            raise SceneError("ego schedule must start with a change point at frame 0")
        for k, (frame, lane) in enumerate(schedule):
            if not 0 <= frame < self.frames:
                raise SceneError(f"ego change point at frame {frame} outside 0..{self.frames - 1}")
            if not 1 <= lane <= self.lane_count:
                raise SceneError(f"ego lane {lane} outside 1..{self.lane_count}")
            if k:
                prev_frame, prev_lane = schedule[k - 1]
                if frame <= prev_frame:
                    raise SceneError(f"ego change points not increasing at frame {frame}")
                if abs(lane - prev_lane) != 1:
                    raise SceneError(f"ego change at frame {frame} jumps from lane {prev_lane} to {lane}")

        last_end = -1
        for start, end, level in sorted(self.brightness_profile):
            if not 0 <= start < end <= self.frames:
                raise SceneError(f"brightness interval [{start}, {end}) outside 0..{self.frames}")
            if start < last_end:
                raise SceneError(f"brightness interval starting at {start} overlaps the previous one")
            if not 0 <= level <= 255:
                raise SceneError(f"brightness level {level} outside 0..255")
            last_end = end
        return self

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "lane_count": self.lane_count,
            "frames": self.frames,
            "ego_schedule": [list(p) for p in self.ego_schedule],
            "brightness_profile": [list(p) for p in self.brightness_profile],
            "occlusion_density": self.occlusion_density,
            "height": self.height,
            "width": self.width,
            "ambient": self.ambient,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        return cls(**data).validate()


@dataclass
class SequenceRecord:
    frames: List[np.ndarray]
    labels: List[LaneLabel]
    spec: Optional[SceneSpec] = None
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frames)


def ego_lane_at(spec: SceneSpec, frame_index: int) -> int:
    lane = spec.ego_schedule[0][1]
    for frame, value in spec.ego_schedule:
        if frame > frame_index:
            break
        lane = value
    return lane


def ambient_at(spec: SceneSpec, frame_index: int) -> int:
    for start, end, level in spec.brightness_profile:
        if start <= frame_index < end:
            return level
    return spec.ambient


def horizon_row(height: int) -> int:
    return int(round(HORIZON_FRACTION * height))


def lane_scale(height: int, width: int, row) -> np.ndarray:
    """Pixels per lane width at `row` (zero at the horizon)."""
    y_h = horizon_row(height)
    return BOTTOM_LANE_FRACTION * width * (np.asarray(row, dtype=np.float64) - y_h) / (height - 1 - y_h)


def line_columns(height: int, width: int, lane_count: int, ego_lane: int, row: int) -> List[float]:
    """Column of every road line (borders and dividers, left to right) at a row below the horizon."""
    s = float(lane_scale(height, width, row))
    cx = (width - 1) / 2.0
    return [cx + (k - ego_lane + 0.5) * s for k in range(lane_count + 1)]


def _depth(height: int, rows: np.ndarray) -> np.ndarray:
    y_h = horizon_row(height)
    return (height - 1 - y_h) / np.maximum(rows - y_h, 1e-9)


def divider_visible(spec: SceneSpec, frame_index: int, row: int) -> bool:
    """Whether the dashed dividers are painted at this row in this frame."""
    if row <= horizon_row(spec.height):
        return False
    depth = float(_depth(spec.height, np.array([row]))[0])
    return int(np.floor(depth * DASH_FREQUENCY + frame_index * DASH_SPEED)) % 2 == 0


def _occluders(spec: SceneSpec) -> List[Tuple[float, float, float, float, float]]:
    """(x0, y0, w, h, vx) per occluder, fixed for the whole sequence."""
    rng = np.random.default_rng([spec.seed, 0x0CC1])
    count = int(rng.binomial(MAX_OCCLUDERS, spec.occlusion_density)) if spec.occlusion_density > 0 else 0
    y_h = horizon_row(spec.height)
    boxes = []
    for _ in range(count):
        w = rng.uniform(0.08, 0.2) * spec.width
        h = rng.uniform(0.1, 0.25) * spec.height
        x0 = rng.uniform(-w, spec.width)
        y0 = rng.uniform(y_h, spec.height - h)
        vx = rng.uniform(-1.5, 1.5)
        boxes.append((x0, y0, w, h, vx))
    return boxes


def render_frame(spec: SceneSpec, frame_index: int, ego_lane: Optional[int] = None) -> np.ndarray:
    """Render one uint8 [H, W, 3] frame; deterministic in (spec, frame_index)."""
    if ego_lane is None:
        ego_lane = ego_lane_at(spec, frame_index)
    if not 1 <= ego_lane <= spec.lane_count:
        raise SceneError(f"ego lane {ego_lane} outside 1..{spec.lane_count}")
    H, W = spec.height, spec.width
    y_h = horizon_row(H)

    img = np.empty((H, W, 3), dtype=np.float64)
    img[: y_h + 1] = SKY
    img[y_h + 1:] = GRASS

    rows = np.arange(y_h + 1, H)
    cols = np.arange(W, dtype=np.float64)[None, :]
    s = lane_scale(H, W, rows)[:, None]
    half = np.maximum(0.5, LINE_WIDTH * s / 2.0)
    cx = (W - 1) / 2.0
    offsets = np.arange(spec.lane_count + 1) - ego_lane + 0.5
    centers = cx + offsets[None, :] * s                       # [R, L+1]

    road = (cols >= centers[:, :1] - half) & (cols <= centers[:, -1:] + half)
    region = img[y_h + 1:]
    region[road] = ASPHALT

    dash_on = np.floor(_depth(H, rows) * DASH_FREQUENCY + frame_index * DASH_SPEED) % 2 == 0
    for k in range(spec.lane_count + 1):
        on_line = np.abs(cols - centers[:, k:k + 1]) <= half
        if 0 < k < spec.lane_count:
            on_line &= dash_on[:, None]
        region[on_line] = PAINT

    for x0, y0, w, h, vx in _occluders(spec):
        x = (x0 + vx * frame_index + w) % (W + w) - w
        c0, c1 = max(0, int(round(x))), min(W, int(round(x + w)))
        r0, r1 = max(0, int(round(y0))), min(H, int(round(y0 + h)))
        if c0 < c1 and r0 < r1:
            img[r0:r1, c0:c1] = OCCLUDER

    img *= ambient_at(spec, frame_index) / 255.0
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_sequence(spec: SceneSpec, name: str = "") -> SequenceRecord:
    """Render every frame and label it from the ego schedule."""
    spec.validate()
    frames, labels = [], []
    for t in range(spec.frames):
        lane = ego_lane_at(spec, t)
        frames.append(render_frame(spec, t, lane))
        labels.append(LaneLabel.from_left(lane, spec.lane_count))
    return SequenceRecord(frames=frames, labels=labels, spec=spec, name=name)


def random_scene(
    profile: str,
    rng: np.random.Generator,
    frames: int = 16,
    height: int = 64,
    width: int = 128,
) -> SceneSpec:
    """
    Draw a scene for a corpus profile.

    train/test: uniform lane count, up to two lane changes, ambient 150..255
    with an occasional mild dip. tunnel-test: ambient 180..255 with one drop
    to 15-35% of it, from frame 1 in sequences shorter than four frames and
    lasting at least three frames otherwise when there is room.
    """
    if profile not in PROFILES:
        raise SceneError(f"unknown corpus profile '{profile}' (expected one of {PROFILES})")
    lane_count = int(rng.integers(1, MAX_LANES + 1))
    lane = int(rng.integers(1, lane_count + 1))
    schedule = [(0, lane)]
    if lane_count > 1 and frames > 1:
        n_changes = int(rng.integers(0, 3))
        change_frames = sorted(rng.choice(np.arange(1, frames), size=min(n_changes, frames - 1), replace=False))
        for frame in change_frames:
            if lane == 1:
                step = 1
            elif lane == lane_count:
                step = -1
            else:
                step = 1 if rng.random() < 0.5 else -1
            lane += step
            schedule.append((int(frame), lane))

    profile_events: List[Tuple[int, int, int]] = []
    if profile == "tunnel-test":
        if frames < 2:
            raise SceneError(f"tunnel-test sequences need at least 2 frames for a brightness drop, got {frames}")
        ambient = int(rng.integers(180, 256))
        if frames >= 4:
            start = int(rng.integers(max(1, frames // 4), max(2, frames // 2) + 1))
            end = int(rng.integers(min(frames, start + 3), frames + 1))
        else:
            start, end = 1, frames
        level = int(ambient * rng.uniform(0.15, 0.35))
        profile_events.append((start, max(end, start + 1), level))
    else:
        ambient = int(rng.integers(150, 256))
        if frames >= 4 and rng.random() < 0.3:
            start = int(rng.integers(1, frames - 2))
            end = int(rng.integers(start + 1, min(frames, start + max(2, frames // 3)) + 1))
            profile_events.append((start, end, int(ambient * rng.uniform(0.6, 0.9))))

    return SceneSpec(
        seed=int(rng.integers(0, 2**63 - 1)),
        lane_count=lane_count,
        frames=frames,
        ego_schedule=tuple(schedule),
        brightness_profile=tuple(profile_events),
        occlusion_density=float(rng.uniform(0.0, 0.4)),
        height=height,
        width=width,
        ambient=ambient,
    ).validate()
