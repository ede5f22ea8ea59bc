"""
Training Module
Seeded truncated-BPTT training of the lane ID network with Adam, plus the
full-model finite-difference gradient check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import jsonlines
import numpy as np
import torch

from .augment import augment
from .checkpoint import save_checkpoint
from .config import RunConfig
from .conventions import LaneLabel
from .dataset import load_corpus
from .errors import NonFiniteError, ShapeError, TrainingAbortedError
from .logger import error_tracker, log_function_call, logger
from .model import LaneNet, ModelConfig, build_model, forward_sequence, image_to_tensor
from .numerics import DTYPE, AdamState, adam_step, grad_check, lr_at
from .objective import frozen_weights, sequence_loss
from .synthgen import SequenceRecord


@dataclass
class TrainingResult:
    checkpoint: Path
    log: Path
    iterations: int
    losses: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def log_path_for(checkpoint: Path) -> Path:
    return checkpoint.with_name(checkpoint.name + ".log.jsonl")


def check_corpus_dims(records: Sequence[SequenceRecord], config: ModelConfig) -> None:
    expected = (config.height, config.width, 3)
    for record in records:
        for frame in record.frames:
            if frame.shape != expected:
                raise ShapeError(
                    f"sequence '{record.name}' has frames of shape {frame.shape}, model expects {expected}"
                )


def sample_batch(
    records: Sequence[SequenceRecord], config: RunConfig, rng: np.random.Generator
) -> List[Tuple[List[np.ndarray], List[LaneLabel]]]:
    """Random windows of `sequence_length` consecutive frames, augmented per sequence."""
    batch = []
    for index in rng.integers(0, len(records), size=config.batch_size):
        record = records[int(index)]
        length = min(config.sequence_length, len(record))
        start = int(rng.integers(0, len(record) - length + 1))
        frames = record.frames[start:start + length]
        labels = record.labels[start:start + length]
        batch.append(augment(frames, labels, rng, config.augment))
    return batch


def _abort(model: LaneNet, config: RunConfig, out: Path, iteration: int, error: Exception) -> TrainingAbortedError:
    abort_path = out.with_name(out.stem + ".abort" + out.suffix)
    save_checkpoint(model.parameter_set(), config.model, abort_path, iteration, config.seed)
    error_tracker.log_error(
        error,
        context={"iteration": iteration, "checkpoint": str(abort_path)},
        module="train",
        function="train",
    )
    logger.error(f"Training aborted at iteration {iteration}: {error}; parameters saved to {abort_path}")
    return TrainingAbortedError(f"iteration {iteration}: {error}", abort_path)


@log_function_call
def train(
    config: RunConfig,
    records: Optional[Sequence[SequenceRecord]] = None,
    out: Optional[Path] = None,
) -> TrainingResult:
    """
    Train a model and write its checkpoint.

    Every iteration samples `batch_size` sequences, unrolls each from a
    fresh recurrent state, averages the loss over sequences and frames,
    backpropagates through the whole window and takes one Adam step.

    Args:
        config: Run configuration
        records: In-memory sequences; loaded from paths.train_corpus when None
        out: Checkpoint path; defaults to paths.checkpoint

    Returns:
        TrainingResult with the checkpoint, the JSON-lines log and per-iteration losses
    """
    config.validate()
    out = Path(out or config.paths.checkpoint)
    if records is None:
        records = load_corpus(config.paths.train_corpus)
    if not records:
        raise ShapeError("training corpus is empty")
    check_corpus_dims(records, config.model)

    rng = np.random.default_rng(config.seed)
    model = build_model(config.model, seed=config.seed)
    params = model.parameter_set()
    opt = config.optimizer
    adam = AdamState.create(
        params, beta1=opt.beta1, beta2=opt.beta2, lr=opt.lr, weight_decay=opt.weight_decay, eps=opt.eps
    )

    log_path = log_path_for(out)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    losses: List[float] = []
    logger.info(
        f"Training '{config.model.variant}' for {config.iterations} iterations "
        f"on {len(records)} sequences (batch {config.batch_size}, length {config.sequence_length})"
    )

    with jsonlines.open(log_path, mode="w", flush=True) as log:
        for iteration in range(config.iterations):
            lr = lr_at(iteration, opt.lr, opt.schedule_scale, opt.schedule_start, opt.schedule_every)
            batch = sample_batch(records, config, rng)

            for p in params.values():
                p.grad = None
            total = 0.0
            summary = {}
            for frames, labels in batch:
                outputs, _ = forward_sequence(model, [image_to_tensor(f) for f in frames])
                try:
                    loss, parts = sequence_loss(outputs, labels, config.objective.z_offset)
                except NonFiniteError as e:
                    raise _abort(model, config, out, iteration, e) from e
                if not math.isfinite(float(loss)):
                    raise _abort(model, config, out, iteration, NonFiniteError(f"non-finite loss {float(loss)}"))
                (loss / len(batch)).backward()
                total += float(loss) / len(batch)
                for key, value in parts.items():
                    summary[key] = summary.get(key, 0.0) + value / len(batch)

            try:
                adam_step(params, None, adam, lr)
            except NonFiniteError as e:
                raise _abort(model, config, out, iteration, e) from e

            losses.append(total)
            entry = {"iteration": iteration, "loss": total, "lr": lr}
            entry.update({k: v for k, v in summary.items() if k != "total"})
            log.write(entry)
            if config.log_every and (iteration % config.log_every == 0 or iteration == config.iterations - 1):
                logger.info(f"Training iteration {iteration}: loss={total:.4f} lr={lr:.2e}")

    save_checkpoint(params, config.model, out, config.iterations, config.seed)
    logger.info(f"Training finished; checkpoint at {out}")
    return TrainingResult(checkpoint=out, log=log_path, iterations=config.iterations, losses=losses)


def model_grad_check(
    variant: str = "convlstm",
    frames: int = 2,
    eps: float = 1e-5,
    seed: int = 0,
    max_coords: Optional[int] = None,
) -> float:
    """
    Finite-difference check of the whole network and objective on the tiny
    configuration. Uses the smooth activation and freezes the adaptive
    weights at their base-point values.
    """
    config = ModelConfig.tiny(variant, activation="softplus")
    model = build_model(config, seed=seed)
    generator = torch.Generator().manual_seed(seed)
    images = [torch.rand((3, config.height, config.width), generator=generator, dtype=DTYPE) for _ in range(frames)]
    labels = [LaneLabel.from_left(2 + (t % 2), 4) for t in range(frames)]

    with torch.no_grad():
        base, _ = forward_sequence(model, images)
    weights = [frozen_weights(out) for out in base]

    def loss_fn():
        outputs, _ = forward_sequence(model, images)
        return sequence_loss(outputs, labels, weights=weights)[0]

    error = grad_check(loss_fn, model.parameter_set(), eps=eps, max_coords=max_coords, seed=seed)
    logger.info(f"Gradient check ({variant}, {frames} frames): max relative error {error:.3e}")
    return error
