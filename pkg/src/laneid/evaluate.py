"""
Evaluation Module
Per-frame accuracy metrics, brightness-threshold and decision-criterion
sweeps, per-frame inference output and model profiling.

Raw correctness: the left argmax or the right argmax matches its label.
Final correctness: the ID of the convention picked by the decision module
matches that convention's label.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping, Optional, Protocol, Sequence, Tuple

import jsonlines
import numpy as np
import pandas as pd
import torch

from .brightness import BrightnessConfig, adjust_stream
from .conventions import MAX_LANES, LaneLabel
from .decision import DecisionConfig, DecisionCriterion, FinalEstimate, decide_stream
from .errors import ShapeError
from .logger import log_function_call, logger, perf_logger
from .model import LaneNet, forward_sequence, image_to_tensor, parameter_count
from .numerics import DTYPE
from .paths import worker_count
from .synthgen import SequenceRecord

Probs = Tuple[np.ndarray, np.ndarray, np.ndarray]
DEFAULT_THRESHOLDS = (100.0, 130.0, 150.0, 170.0)


class SequencePredictor(Protocol):
    def predict_sequence(self, record: SequenceRecord, frames: Sequence[np.ndarray]) -> List[Probs]:
        """(left, right, count) probabilities per frame, from a fresh state."""
        ...


class ModelPredictor:
    """Runs a LaneNet over a sequence without tracking gradients"""

    def __init__(self, model: LaneNet, name: Optional[str] = None):
        self.model = model
        self.name = name or model.config.variant

    def predict_sequence(self, record: SequenceRecord, frames: Sequence[np.ndarray]) -> List[Probs]:
        cfg = self.model.config
        expected = (cfg.height, cfg.width, 3)
        for frame in frames:
            if frame.shape != expected:
                raise ShapeError(f"sequence '{record.name}' frame shape {frame.shape} does not match model input {expected}")
        with torch.no_grad():
            outputs, _ = forward_sequence(self.model, [image_to_tensor(f) for f in frames])
        return [out.as_numpy() for out in outputs]


@dataclass
class Prediction:
    """Model output for one sequence after optional brightness adjustment"""
    record: SequenceRecord
    probs: List[Probs]
    fired: List[bool]


def _argmax_id(p: np.ndarray) -> int:
    return int(np.argmax(p)) + 1


@dataclass
class Metrics:
    """Exact per-frame counts; fractions are derived"""
    total: int = 0
    raw_correct: int = 0
    final_correct: int = 0
    left_correct: int = 0
    right_correct: int = 0
    count_correct: int = 0
    num_classes: int = MAX_LANES
    confusion_left: np.ndarray = field(default=None, repr=False)
    confusion_right: np.ndarray = field(default=None, repr=False)
    confusion_count: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("confusion_left", "confusion_right", "confusion_count"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros((self.num_classes, self.num_classes), dtype=np.int64))

    @staticmethod
    def _fraction(n: int, total: int) -> float:
        return n / total if total else 0.0

    @property
    def raw_combined(self) -> float:
        return self._fraction(self.raw_correct, self.total)

    @property
    def final(self) -> float:
        return self._fraction(self.final_correct, self.total)

    @property
    def left_only(self) -> float:
        return self._fraction(self.left_correct, self.total)

    @property
    def right_only(self) -> float:
        return self._fraction(self.right_correct, self.total)

    @property
    def count_accuracy(self) -> float:
        return self._fraction(self.count_correct, self.total)

    def record(self, label: LaneLabel, left_id: int, right_id: int, count_id: int, estimate: FinalEstimate) -> None:
        left_ok = left_id == label.delta_l
        right_ok = right_id == label.delta_r
        self.total += 1
        self.left_correct += left_ok
        self.right_correct += right_ok
        self.raw_correct += left_ok or right_ok
        self.count_correct += count_id == label.lane_count
        self.final_correct += estimate.lane_id == label.id_for(estimate.convention)
        self.confusion_left[label.delta_l - 1, left_id - 1] += 1
        self.confusion_right[label.delta_r - 1, right_id - 1] += 1
        self.confusion_count[label.lane_count - 1, count_id - 1] += 1

    def merge(self, other: "Metrics") -> "Metrics":
        self.total += other.total
        self.raw_correct += other.raw_correct
        self.final_correct += other.final_correct
        self.left_correct += other.left_correct
        self.right_correct += other.right_correct
        self.count_correct += other.count_correct
        self.confusion_left += other.confusion_left
        self.confusion_right += other.confusion_right
        self.confusion_count += other.confusion_count
        return self

    def as_dict(self, confusion: bool = False) -> dict:
        data = {
            "frames": self.total,
            "raw_combined": self.raw_combined,
            "final": self.final,
            "left_only": self.left_only,
            "right_only": self.right_only,
            "count_accuracy": self.count_accuracy,
        }
        if confusion:
            data["confusion"] = {
                "left": self.confusion_left.tolist(),
                "right": self.confusion_right.tolist(),
                "count": self.confusion_count.tolist(),
            }
        return data


def predict_sequence(predictor: SequencePredictor, record: SequenceRecord, brightness: BrightnessConfig) -> Prediction:
    """Fresh brightness tracker and model state for one sequence."""
    frames, fired = adjust_stream(record.frames, brightness)
    probs = predictor.predict_sequence(record, frames)
    if len(probs) != len(record.labels):
        raise ShapeError(f"predictor returned {len(probs)} outputs for {len(record.labels)} frames")
    return Prediction(record, probs, fired)


def predict_corpus(
    predictor: SequencePredictor,
    records: Sequence[SequenceRecord],
    brightness: Optional[BrightnessConfig] = None,
    workers: Optional[int] = None,
) -> List[Prediction]:
    """Predict every sequence; sequences are independent and run in a thread pool."""
    brightness = brightness or BrightnessConfig()
    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        return list(pool.map(lambda r: predict_sequence(predictor, r, brightness), records))


def score_sequence(prediction: Prediction, decision: DecisionConfig, num_classes: int = MAX_LANES) -> Tuple[Metrics, List[FinalEstimate]]:
    metrics = Metrics(num_classes=max(num_classes, MAX_LANES))
    estimates = decide_stream(prediction.probs, decision)
    for label, (left, right, count), estimate in zip(prediction.record.labels, prediction.probs, estimates):
        metrics.record(label, _argmax_id(left), _argmax_id(right), _argmax_id(count), estimate)
    return metrics, estimates


def score(predictions: Sequence[Prediction], decision: Optional[DecisionConfig] = None) -> Metrics:
    """Aggregate metrics over sequences in input order."""
    decision = decision or DecisionConfig()
    sizes = [len(p.probs[0][0]) for p in predictions if p.probs]
    num_classes = max([MAX_LANES] + sizes)
    total = Metrics(num_classes=num_classes)
    for prediction in predictions:
        total.merge(score_sequence(prediction, decision, num_classes)[0])
    return total


@log_function_call
def evaluate(
    predictor: SequencePredictor,
    records: Sequence[SequenceRecord],
    brightness: Optional[BrightnessConfig] = None,
    decision: Optional[DecisionConfig] = None,
    workers: Optional[int] = None,
) -> Metrics:
    """
    Per sequence: reset model state, brightness tracker and decision state;
    per frame: optional brightness adjustment, forward, raw scoring,
    decision, final scoring.
    """
    metrics = score(predict_corpus(predictor, records, brightness, workers), decision)
    logger.info(
        f"Evaluated {metrics.total} frames: raw={metrics.raw_combined:.4f} final={metrics.final:.4f} "
        f"left={metrics.left_only:.4f} right={metrics.right_only:.4f} count={metrics.count_accuracy:.4f}"
    )
    return metrics


def write_report(rows: Sequence[dict], csv_path: Path, summary: Optional[dict] = None) -> Tuple[Path, Path]:
    """CSV of the rows plus a JSON file (rows and summary) next to it."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows)).to_csv(csv_path, index=False)
    json_path = csv_path.with_suffix(".json")
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump({"rows": list(rows), "summary": summary or {}}, f, indent=2)
    logger.info(f"Report written to {csv_path}")
    return csv_path, json_path


def evaluation_rows(
    predictors: Mapping[str, SequencePredictor],
    records: Sequence[SequenceRecord],
    brightness: Optional[BrightnessConfig] = None,
    decision: Optional[DecisionConfig] = None,
) -> List[dict]:
    """One metrics row per named model."""
    brightness = brightness or BrightnessConfig()
    return [
        {"model": name, "brightness": brightness.label, **evaluate(predictor, records, brightness, decision).as_dict()}
        for name, predictor in predictors.items()
    ]


def sweep_brightness(
    predictors: Mapping[str, SequencePredictor],
    records: Sequence[SequenceRecord],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    decision: Optional[DecisionConfig] = None,
    measure: str = "luma",
    out: Optional[Path] = None,
    window: Optional[int] = None,
) -> List[dict]:
    """
    Evaluate each model with adjustment disabled and at each threshold.

    Returns:
        Rows {model, threshold, raw, final, ...}; threshold is "off" for the
        disabled run
    """
    settings = [BrightnessConfig(enabled=False, measure=measure, window=window)]
    settings += [
        BrightnessConfig(enabled=True, threshold=float(b), measure=measure, window=window).validate()
        for b in thresholds
    ]
    rows = []
    for name, predictor in predictors.items():
        for setting in settings:
            metrics = evaluate(predictor, records, setting, decision)
            rows.append({
                "model": name,
                "threshold": setting.label,
                "raw": metrics.raw_combined,
                "final": metrics.final,
                "left_only": metrics.left_only,
                "right_only": metrics.right_only,
                "frames": metrics.total,
            })
    if out is not None:
        write_report(rows, out, {"thresholds": [float(b) for b in thresholds]})
    return rows


def sweep_decision(
    predictor: SequencePredictor,
    records: Sequence[SequenceRecord],
    brightness: Optional[BrightnessConfig] = None,
    criteria: Sequence[DecisionCriterion] = tuple(DecisionCriterion),
    entropy_sign: int = -1,
    temporal_penalty: bool = True,
    out: Optional[Path] = None,
) -> List[dict]:
    """Final accuracy per criterion from a single prediction pass; raw is shared."""
    predictions = predict_corpus(predictor, records, brightness)
    rows = []
    raw = None
    for criterion in criteria:
        config = DecisionConfig(criterion=DecisionCriterion(criterion).value, entropy_sign=entropy_sign,
                                temporal_penalty=temporal_penalty)
        metrics = score(predictions, config)
        raw = metrics.raw_combined
        rows.append({"criterion": config.criterion, "raw": raw, "final": metrics.final, "frames": metrics.total})
    if out is not None:
        write_report(rows, out, {"raw": raw})
    return rows


def infer(
    predictor: SequencePredictor,
    records: Sequence[SequenceRecord],
    brightness: Optional[BrightnessConfig] = None,
    decision: Optional[DecisionConfig] = None,
    out: Optional[Path] = None,
) -> List[dict]:
    """Per-frame decisions as dicts; written as JSON lines when `out` is given."""
    decision = decision or DecisionConfig()
    rows = []
    for prediction in predict_corpus(predictor, records, brightness):
        _, estimates = score_sequence(prediction, decision)
        for t, (estimate, fired) in enumerate(zip(estimates, prediction.fired)):
            rows.append({
                "sequence": prediction.record.name,
                "frame": t,
                **estimate.as_dict(),
                "brightness_adjusted": fired,
            })
    if out is not None:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with jsonlines.open(out, mode="w") as writer:
            writer.write_all(rows)
        logger.info(f"Wrote {len(rows)} frame results to {out}")
    return rows


def profile_model(model: LaneNet, frames: int = 20, seed: int = 0) -> dict:
    """Parameter count, float64 checkpoint payload in MB and mean forward time per frame."""
    cfg = model.config
    generator = torch.Generator().manual_seed(seed)
    images = [torch.rand((3, cfg.height, cfg.width), generator=generator, dtype=DTYPE) for _ in range(frames)]
    count = parameter_count(model)
    with torch.no_grad():
        forward_sequence(model, images[:1])
        with perf_logger.measure("forward_frame", {"variant": cfg.variant, "frames": frames}) as timer:
            forward_sequence(model, images)
    return {
        "variant": cfg.variant,
        "parameters": count,
        "size_mb": count * 8 / (1024 * 1024),
        "ms_per_frame": 1000.0 * timer.duration / max(frames, 1),
    }
