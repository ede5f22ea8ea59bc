import json
import struct

import pytest
import torch

from laneid.checkpoint import (
    CHECKPOINT_VERSION,
    MAGIC,
    apply_params,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_model,
    save_checkpoint,
)
from laneid.errors import (
    BadMagicError,
    CheckpointError,
    CheckpointShapeError,
    TruncatedDataError,
    VersionMismatchError,
)
from laneid.model import ModelConfig, build_model


@pytest.fixture
def model():
    return build_model(ModelConfig.tiny("convlstm"), seed=2)


def test_round_trip_bit_identical(tmp_path, model):
    path = save_checkpoint(model.parameter_set(), model.config, tmp_path / "m.ckpt", iteration=7, seed=3)
    ckpt = load_checkpoint(path)
    assert ckpt.config == model.config
    assert (ckpt.iteration, ckpt.seed) == (7, 3)
    own = model.parameter_set()
    assert list(ckpt.params) == list(own)
    for name, value in own.items():
        assert ckpt.params[name].dtype == torch.float64
        assert torch.equal(ckpt.params[name], value.detach())


def test_load_model_reproduces_outputs(tmp_path, model):
    path = save_checkpoint(model.parameter_set(), model.config, tmp_path / "m.ckpt")
    image = torch.rand((3, 16, 32), generator=torch.Generator().manual_seed(0), dtype=torch.float64)
    with torch.no_grad():
        a, _ = model.forward_frame(model.reset_state(), image)
        loaded = load_model(path)
        b, _ = loaded.forward_frame(loaded.reset_state(), image)
    assert torch.equal(a.count_probs, b.count_probs)


def test_layout(model):
    blob = encode_checkpoint(model.parameter_set(), model.config)
    magic, version, header_len = struct.unpack_from("<4sIQ", blob)
    assert magic == MAGIC == b"MOKA"
    assert version == CHECKPOINT_VERSION
    data_bytes = len(blob) - 16 - header_len
    assert data_bytes == 8 * sum(p.numel() for p in model.parameter_set().values())


@pytest.mark.parametrize("keep", [10, 40, -1])
def test_truncated(model, keep):
    blob = encode_checkpoint(model.parameter_set(), model.config)
    with pytest.raises(TruncatedDataError):
        decode_checkpoint(blob[:keep] if keep > 0 else blob[:-8])


def test_bad_magic(model):
    blob = encode_checkpoint(model.parameter_set(), model.config)
    with pytest.raises(BadMagicError):
        decode_checkpoint(b"NOPE" + blob[4:])


def test_version_mismatch_names_both(model):
    blob = bytearray(encode_checkpoint(model.parameter_set(), model.config))
    struct.pack_into("<I", blob, 4, CHECKPOINT_VERSION + 1)
    with pytest.raises(VersionMismatchError) as info:
        decode_checkpoint(bytes(blob))
    message = str(info.value)
    assert f"version {CHECKPOINT_VERSION + 1}" in message
    assert f"version {CHECKPOINT_VERSION}" in message


def test_malformed_header(model):
    header = b"{not json"
    blob = struct.pack("<4sIQ", MAGIC, CHECKPOINT_VERSION, len(header)) + header
    with pytest.raises(CheckpointError, match="malformed"):
        decode_checkpoint(blob)


def test_errors_are_distinct():
    kinds = [BadMagicError, VersionMismatchError, TruncatedDataError, CheckpointShapeError]
    assert len(set(kinds)) == 4
    assert all(issubclass(k, CheckpointError) for k in kinds)


def test_shape_disagreement(model):
    params = dict(model.parameter_set())
    name = next(iter(params))
    params[name] = torch.zeros(tuple(params[name].shape) + (1,), dtype=torch.float64)
    with pytest.raises(CheckpointShapeError, match=name):
        apply_params(build_model(model.config), params)


def test_missing_parameter(model):
    params = dict(model.parameter_set())
    params.pop(next(iter(params)))
    with pytest.raises(CheckpointShapeError, match="missing"):
        apply_params(build_model(model.config), params)


def test_expected_config_mismatch(tmp_path, model):
    path = save_checkpoint(model.parameter_set(), model.config, tmp_path / "m.ckpt")
    with pytest.raises(CheckpointShapeError):
        load_model(path, expected=ModelConfig.tiny("basic"))


@pytest.mark.parametrize("keep", [0, 1, 3])
def test_partial_magic_is_truncated(model, keep):
    blob = encode_checkpoint(model.parameter_set(), model.config)
    with pytest.raises(TruncatedDataError):
        decode_checkpoint(blob[:keep])


def _with_table(model, table):
    header = {"config": model.config.to_dict(), "params": table, "iteration": 0, "seed": 0}
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    return struct.pack("<4sIQ", MAGIC, CHECKPOINT_VERSION, len(raw)) + raw


@pytest.mark.parametrize("table", [
    [{"shape": [2], "offset": 0}],
    [{"name": "w", "shape": 2, "offset": 0}],
    [{"name": "w", "shape": [2], "offset": "start"}],
    [{"name": "w", "shape": [-2], "offset": 0}],
    ["w"],
    7,
])
def test_malformed_table_entry(model, table):
    with pytest.raises(CheckpointError, match="malformed"):
        decode_checkpoint(_with_table(model, table))
