"""
Checkpoint file format.

    b"MOKA" | u32 version | u64 header length | JSON header | float64 data

All integers and floats are little-endian. The header holds the model
config, a parameter table (name, shape, byte offset into the data block),
the training iteration and the run seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np
import torch

from .errors import (
    BadMagicError,
    CheckpointError,
    CheckpointShapeError,
    ConfigError,
    TruncatedDataError,
    VersionMismatchError,
)
from .logger import logger
from .model import LaneNet, ModelConfig, build_model
from .numerics import DTYPE

MAGIC = b"MOKA"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")
_FLOAT = np.dtype("<f8")


@dataclass
class Checkpoint:
    config: ModelConfig
    params: Dict[str, torch.Tensor]
    iteration: int = 0
    seed: int = 0
    header: dict = field(default_factory=dict, repr=False)


def encode_checkpoint(
    params: Mapping[str, torch.Tensor], config: ModelConfig, iteration: int = 0, seed: int = 0
) -> bytes:
    table = []
    blobs = []
    offset = 0
    for name, p in params.items():
        data = p.detach().cpu().to(DTYPE).numpy().astype(_FLOAT, copy=False).tobytes()
        table.append({"name": name, "shape": list(p.shape), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = {
        "config": config.to_dict(),
        "params": table,
        "iteration": int(iteration),
        "seed": int(seed),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(MAGIC, CHECKPOINT_VERSION, len(header_bytes)) + header_bytes + b"".join(blobs)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(blob) < len(MAGIC) and MAGIC.startswith(blob):
        raise TruncatedDataError(f"{source} ends inside the magic ({len(blob)} bytes)")
    if blob[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{source} does not start with {MAGIC!r}")
    if len(blob) < _PREFIX.size:
        raise TruncatedDataError(f"{source} ends inside the file prefix ({len(blob)} bytes)")
    _, version, header_len = _PREFIX.unpack_from(blob)
    if version != CHECKPOINT_VERSION:
        raise VersionMismatchError(version, CHECKPOINT_VERSION)
    data_start = _PREFIX.size + header_len
    if len(blob) < data_start:
        raise TruncatedDataError(f"{source} ends inside the header ({len(blob)} of {data_start} bytes)")
    try:
        header = json.loads(blob[_PREFIX.size:data_start].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        table = header["params"]
        if not isinstance(table, list):
            raise TypeError(f"parameter table is {type(table).__name__}, not a list")
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ConfigError) as e:
        raise CheckpointError(f"{source} has a malformed header: {e}") from e

    params: Dict[str, torch.Tensor] = {}
    data = memoryview(blob)[data_start:]
    for entry in table:
        try:
            name = str(entry["name"])
            shape = tuple(int(s) for s in entry["shape"])
            start = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"{source} has a malformed parameter entry {entry!r}: {e}") from e
        if start < 0 or any(s < 0 for s in shape):
            raise CheckpointError(f"{source} has a malformed parameter entry {entry!r}")
        count = int(np.prod(shape, dtype=np.int64))
        end = start + count * _FLOAT.itemsize
        if end > len(data):
            raise TruncatedDataError(
                f"{source} ends inside parameter '{name}' (needs {end} data bytes, has {len(data)})"
            )
        values = np.frombuffer(data[start:end], dtype=_FLOAT).astype(np.float64).reshape(shape)
        params[name] = torch.from_numpy(values)
    return Checkpoint(
        config=config,
        params=params,
        iteration=int(header.get("iteration", 0)),
        seed=int(header.get("seed", 0)),
        header=header,
    )


def save_checkpoint(
    params: Mapping[str, torch.Tensor],
    config: ModelConfig,
    path: Union[str, Path],
    iteration: int = 0,
    seed: int = 0,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(params, config, iteration, seed)
    path.write_bytes(blob)
    logger.debug(f"Checkpoint written to {path} ({len(blob)} bytes, iteration {iteration})")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    return decode_checkpoint(path.read_bytes(), str(path))


def apply_params(model: LaneNet, params: Mapping[str, torch.Tensor]) -> LaneNet:
    """Copy checkpoint values into a model; names and shapes must agree exactly."""
    own = model.parameter_set()
    missing = sorted(set(own) - set(params))
    extra = sorted(set(params) - set(own))
    if missing or extra:
        raise CheckpointShapeError(f"parameter names differ: missing {missing}, unexpected {extra}")
    with torch.no_grad():
        for name, p in own.items():
            value = params[name]
            if tuple(value.shape) != tuple(p.shape):
                raise CheckpointShapeError(
                    f"parameter '{name}' has shape {tuple(value.shape)} in the checkpoint, model expects {tuple(p.shape)}"
                )
            p.copy_(value)
    return model


def load_model(path: Union[str, Path], expected: Optional[ModelConfig] = None) -> LaneNet:
    """Rebuild the network stored in a checkpoint."""
    ckpt = load_checkpoint(path)
    if expected is not None and ckpt.config.to_dict() != expected.to_dict():
        raise CheckpointShapeError(f"checkpoint config {ckpt.config.to_dict()} differs from expected {expected.to_dict()}")
    model = apply_params(build_model(ckpt.config), ckpt.params)
    logger.info(f"Loaded '{ckpt.config.variant}' model from {path} (iteration {ckpt.iteration})")
    return model
