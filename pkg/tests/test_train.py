import json

import numpy as np
import pytest
import torch

import laneid.train as train_module
from laneid.augment import AugmentConfig
from laneid.checkpoint import load_checkpoint
from laneid.config import OptimizerConfig, RunConfig
from laneid.errors import ShapeError, TrainingAbortedError
from laneid.model import ModelConfig
from laneid.train import log_path_for, sample_batch, train


def _config(variant="convlstm", iterations=5, **overrides):
    values = dict(
        model=ModelConfig.tiny(variant),
        augment=AugmentConfig.disabled(),
        optimizer=OptimizerConfig(lr=1e-3),
        batch_size=1,
        sequence_length=4,
        iterations=iterations,
        log_every=0,
    )
    values.update(overrides)
    return RunConfig(**values)


def test_loss_decreases_on_fixed_batch(tmp_path, tiny_record):
    result = train(_config(iterations=50), [tiny_record], tmp_path / "m.ckpt")
    losses = result.losses
    assert len(losses) == 50
    assert losses[-1] < losses[0]
    assert np.mean(losses[-10:]) < np.mean(losses[:10])


def test_identical_runs_identical_checkpoints(tmp_path, tiny_record):
    config = _config(iterations=4, augment=AugmentConfig(), batch_size=2, sequence_length=3)
    a = train(config, [tiny_record], tmp_path / "a.ckpt")
    b = train(config, [tiny_record], tmp_path / "b.ckpt")
    assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()
    assert a.losses == b.losses


def test_log_and_checkpoint(tmp_path, tiny_record):
    result = train(_config(iterations=3), [tiny_record], tmp_path / "m.ckpt")
    assert result.log == log_path_for(tmp_path / "m.ckpt")
    entries = [json.loads(line) for line in result.log.read_text().splitlines()]
    assert [e["iteration"] for e in entries] == [0, 1, 2]
    assert all({"loss", "lr", "ce_left", "constraint"} <= e.keys() for e in entries)
    assert entries[0]["loss"] == pytest.approx(result.losses[0])
    ckpt = load_checkpoint(result.checkpoint)
    assert ckpt.iteration == 3
    assert ckpt.config == ModelConfig.tiny("convlstm")


@pytest.mark.parametrize("variant", ["basic", "stdlstm"])
def test_other_variants_train(tmp_path, tiny_record, variant):
    result = train(_config(variant, iterations=2), [tiny_record], tmp_path / f"{variant}.ckpt")
    assert all(np.isfinite(result.losses))
    assert load_checkpoint(result.checkpoint).config.variant == variant


def test_non_finite_loss_aborts_with_checkpoint(tmp_path, tiny_record, monkeypatch):
    def broken(outputs, labels, z_offset=0.0, weights=None):
        return torch.tensor(float("nan"), dtype=torch.float64), {}

    monkeypatch.setattr(train_module, "sequence_loss", broken)
    with pytest.raises(TrainingAbortedError) as info:
        train(_config(iterations=3), [tiny_record], tmp_path / "m.ckpt")
    assert info.value.checkpoint == tmp_path / "m.abort.ckpt"
    assert load_checkpoint(info.value.checkpoint).iteration == 0
    assert not (tmp_path / "m.ckpt").exists()


def test_dimension_mismatch(tmp_path, tiny_record):
    config = _config(model=ModelConfig.tiny("convlstm", height=32, width=64))
    with pytest.raises(ShapeError, match="tiny-00000"):
        train(config, [tiny_record], tmp_path / "m.ckpt")


def test_empty_corpus(tmp_path):
    with pytest.raises(ShapeError):
        train(_config(), [], tmp_path / "m.ckpt")


def test_sample_batch_windows(tiny_record, rng):
    batch = sample_batch([tiny_record], _config(batch_size=3, sequence_length=2), rng)
    assert len(batch) == 3
    for frames, labels in batch:
        assert len(frames) == len(labels) == 2
        assert frames[0].shape == (16, 32, 3)


def test_nan_weight_aborts_with_checkpoint(tmp_path, tiny_record, monkeypatch):
    build = train_module.build_model

    def poisoned(config, seed=0):
        model = build(config, seed)
        with torch.no_grad():
            model.parameter_set()["heads.left.fc2_bias"][0] = float("nan")
        return model

    monkeypatch.setattr(train_module, "build_model", poisoned)
    with pytest.raises(TrainingAbortedError) as info:
        train(_config(iterations=3), [tiny_record], tmp_path / "m.ckpt")
    assert info.value.checkpoint == tmp_path / "m.abort.ckpt"
    assert load_checkpoint(info.value.checkpoint).iteration == 0
    assert not (tmp_path / "m.ckpt").exists()
