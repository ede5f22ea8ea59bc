"""
Corpus Storage Module
Writes and reads synthetic corpora on disk.

Layout:
    <corpus>/manifest.json
    <corpus>/<profile>-<index:05d>/frame_%05d.ppm   binary P6
    <corpus>/<profile>-<index:05d>/labels.jsonl     {frame, delta_l, delta_r, lane_count}
    <corpus>/<profile>-<index:05d>/scene.json       the SceneSpec
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Union

import jsonlines
import numpy as np
from PIL import Image

from .conventions import LaneLabel
from .errors import CorpusError, LabelError, SceneError
from .logger import log_function_call, logger
from .paths import worker_count
from .synthgen import GENERATOR_VERSION, PROFILES, SceneSpec, SequenceRecord, generate_sequence, random_scene

PROFILE_CODES = {name: code for code, name in enumerate(PROFILES)}
MANIFEST = "manifest.json"
LABELS = "labels.jsonl"
SCENE = "scene.json"


def frame_name(index: int) -> str:
    return f"frame_{index:05d}.ppm"


def sequence_name(profile: str, index: int) -> str:
    return f"{profile}-{index:05d}"


def write_ppm(path: Path, image: np.ndarray) -> None:
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise CorpusError(f"expected a uint8 [H, W, 3] image, got {image.dtype} {image.shape}", path)
    try:
        Image.fromarray(image).save(path, format="PPM")
    except OSError as e:
        raise CorpusError(f"failed to write frame: {e}", path) from e


def read_ppm(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            if im.format != "PPM":
                raise CorpusError(f"not a PPM image (format {im.format})", path)
            return np.array(im.convert("RGB"), dtype=np.uint8)
    except CorpusError:
        raise
    except OSError as e:
        raise CorpusError(f"failed to read frame: {e}", path) from e


def _write_json(path: Path, data) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise CorpusError(f"failed to write {path.name}: {e}", path) from e


def _read_json(path: Path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise CorpusError(f"missing {path.name}", path) from e
    except (OSError, json.JSONDecodeError) as e:
        raise CorpusError(f"failed to read {path.name}: {e}", path) from e


def write_sequence(record: SequenceRecord, directory: Path) -> Path:
    """Write frames, labels and (if present) the scene spec into `directory`."""
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CorpusError(f"cannot create sequence directory: {e}", directory) from e
    for t, frame in enumerate(record.frames):
        write_ppm(directory / frame_name(t), frame)
    lines = [{"frame": t, **label.as_dict()} for t, label in enumerate(record.labels)]
    try:
        with jsonlines.open(directory / LABELS, mode="w", sort_keys=True) as writer:
            writer.write_all(lines)
    except OSError as e:
        raise CorpusError(f"failed to write labels: {e}", directory / LABELS) from e
    if record.spec is not None:
        _write_json(directory / SCENE, record.spec.to_dict())
    return directory


def _read_labels(path: Path) -> List[LaneLabel]:
    labels = []
    try:
        with jsonlines.open(path) as reader:
            for line_no, row in enumerate(reader.iter(skip_empty=True), start=1):
                try:
                    if row["frame"] != len(labels):
                        raise CorpusError(f"line {line_no}: frame {row['frame']} out of order", path)
                    labels.append(LaneLabel(row["delta_l"], row["delta_r"], row["lane_count"]))
                except (KeyError, TypeError, LabelError) as e:
                    raise CorpusError(f"line {line_no}: bad label record ({e})", path) from e
    except CorpusError:
        raise
    except jsonlines.InvalidLineError as e:
        raise CorpusError(f"line {e.lineno}: bad label record ({e})", path) from e
    except OSError as e:
        raise CorpusError(f"failed to read labels: {e}", path) from e
    return labels


def load_sequence(directory: Path) -> SequenceRecord:
    directory = Path(directory)
    labels = _read_labels(directory / LABELS)
    frames = [read_ppm(directory / frame_name(t)) for t in range(len(labels))]
    spec = None
    if (directory / SCENE).exists():
        try:
            spec = SceneSpec.from_dict(_read_json(directory / SCENE))
        except (TypeError, SceneError) as e:
            raise CorpusError(f"invalid scene description: {e}", directory / SCENE) from e
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise CorpusError(f"frames of differing shapes {sorted(shapes)}", directory)
    return SequenceRecord(frames=frames, labels=labels, spec=spec, name=directory.name)


def read_manifest(corpus: Path) -> dict:
    manifest = _read_json(Path(corpus) / MANIFEST)
    for key in ("profile", "seed", "count", "height", "width", "sequences"):
        if key not in manifest:
            raise CorpusError(f"manifest lacks '{key}'", Path(corpus) / MANIFEST)
    return manifest


def load_corpus(corpus: Union[str, Path], limit: Optional[int] = None) -> List[SequenceRecord]:
    """Load the sequences listed in the manifest, in manifest order."""
    corpus = Path(corpus)
    manifest = read_manifest(corpus)
    names = manifest["sequences"][:limit] if limit is not None else manifest["sequences"]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        records = list(pool.map(lambda n: load_sequence(corpus / n), names))
    logger.info(f"Loaded {len(records)} sequences from {corpus}")
    return records


def _generate_one(profile: str, index: int, seed: int, out_dir: Path, frames: int, height: int, width: int) -> str:
    rng = np.random.default_rng(np.random.SeedSequence([seed, PROFILE_CODES[profile], index]))
    spec = random_scene(profile, rng, frames=frames, height=height, width=width)
    name = sequence_name(profile, index)
    write_sequence(generate_sequence(spec, name), out_dir / name)
    return name


@log_function_call
def make_corpus(
    profile: str,
    count: int,
    seed: int,
    out_dir: Union[str, Path],
    frames: int = 16,
    height: int = 64,
    width: int = 128,
    workers: Optional[int] = None,
) -> dict:
    """
    Generate `count` sequences of a profile into `out_dir`.

    Each sequence draws from its own seed derived from (seed, profile,
    index), so the result is a pure function of the arguments regardless of
    worker count.

    Returns:
        The manifest written to `out_dir/manifest.json`
    """
    if profile not in PROFILE_CODES:
        raise SceneError(f"unknown corpus profile '{profile}' (expected one of {PROFILES})")
    if count < 0 or seed < 0:
        raise SceneError(f"count and seed must be >= 0, got count={count} seed={seed}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise CorpusError(f"cannot create corpus directory: {e}", out_dir) from e

    logger.info(f"Generating {count} '{profile}' sequences (seed {seed}) into {out_dir}")
    workers = worker_count(workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        names = list(pool.map(
            lambda i: _generate_one(profile, i, seed, out_dir, frames, height, width), range(count)
        ))

    manifest = {
        "profile": profile,
        "seed": seed,
        "count": count,
        "frames": frames,
        "height": height,
        "width": width,
        "generator_version": GENERATOR_VERSION,
        "sequences": names,
    }
    _write_json(out_dir / MANIFEST, manifest)
    logger.info(f"Corpus '{profile}' written: {count} sequences")
    return manifest
