import json

import numpy as np
import pytest

from laneid.brightness import perceived_brightness
from laneid.dataset import (
    LABELS,
    MANIFEST,
    frame_name,
    load_corpus,
    load_sequence,
    make_corpus,
    read_manifest,
    read_ppm,
    write_ppm,
    write_sequence,
)
from laneid.errors import CorpusError, SceneError
from laneid.synthgen import GENERATOR_VERSION

SMALL = dict(frames=4, height=16, width=32)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestMakeCorpus:
    def test_same_seed_byte_identical(self, tmp_path):
        make_corpus("train", 3, 42, tmp_path / "a", workers=1, **SMALL)
        make_corpus("train", 3, 42, tmp_path / "b", workers=4, **SMALL)
        a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
        assert a.keys() == b.keys()
        assert all(a[k] == b[k] for k in a)

    def test_different_seed_differs(self, tmp_path):
        make_corpus("train", 2, 1, tmp_path / "a", **SMALL)
        make_corpus("train", 2, 2, tmp_path / "b", **SMALL)
        assert _tree(tmp_path / "a") != _tree(tmp_path / "b")

    def test_manifest(self, tmp_path):
        manifest = make_corpus("test", 2, 5, tmp_path, **SMALL)
        assert read_manifest(tmp_path) == manifest
        assert manifest["generator_version"] == GENERATOR_VERSION
        assert manifest["sequences"] == ["test-00000", "test-00001"]
        assert (manifest["height"], manifest["width"], manifest["count"]) == (16, 32, 2)

    def test_train_and_test_names_disjoint(self, tmp_path):
        train = make_corpus("train", 3, 9, tmp_path / "train", **SMALL)
        test = make_corpus("test", 3, 9, tmp_path / "test", **SMALL)
        assert not set(train["sequences"]) & set(test["sequences"])

    def test_tunnel_corpus_has_drop(self, tmp_path):
        make_corpus("tunnel-test", 4, 3, tmp_path, frames=16, height=16, width=32)
        for record in load_corpus(tmp_path):
            levels = [perceived_brightness(f) for f in record.frames]
            assert min(b / a for a, b in zip(levels, levels[1:]) if a > 0) <= 0.4

    def test_rejects_bad_arguments(self, tmp_path):
        with pytest.raises(SceneError):
            make_corpus("night", 1, 0, tmp_path)
        with pytest.raises(SceneError):
            make_corpus("train", -1, 0, tmp_path)


class TestLayout:
    def test_sequence_round_trip(self, tmp_path, tiny_record):
        directory = write_sequence(tiny_record, tmp_path / tiny_record.name)
        assert (directory / frame_name(0)).read_bytes()[:2] == b"P6"
        rows = [json.loads(line) for line in (directory / LABELS).read_text().splitlines()]
        assert rows[2] == {"frame": 2, "delta_l": 2, "delta_r": 2, "lane_count": 3}
        loaded = load_sequence(directory)
        assert loaded.labels == tiny_record.labels
        assert loaded.spec == tiny_record.spec
        assert all(np.array_equal(a, b) for a, b in zip(loaded.frames, tiny_record.frames))

    def test_ppm_round_trip(self, tmp_path, rng):
        image = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
        write_ppm(tmp_path / "x.ppm", image)
        assert np.array_equal(read_ppm(tmp_path / "x.ppm"), image)

    def test_write_rejects_non_rgb(self, tmp_path):
        with pytest.raises(CorpusError):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4), dtype=np.uint8))

    def test_limit(self, tmp_path):
        make_corpus("train", 3, 0, tmp_path, **SMALL)
        assert [r.name for r in load_corpus(tmp_path, limit=2)] == ["train-00000", "train-00001"]


class TestErrors:
    def test_missing_frame_names_path(self, tmp_path, tiny_record):
        directory = write_sequence(tiny_record, tmp_path / "seq")
        (directory / frame_name(1)).unlink()
        with pytest.raises(CorpusError) as info:
            load_sequence(directory)
        assert info.value.path == directory / frame_name(1)
        assert str(directory / frame_name(1)) in str(info.value)

    def test_bad_label_line(self, tmp_path, tiny_record):
        directory = write_sequence(tiny_record, tmp_path / "seq")
        (directory / LABELS).write_text('{"frame": 0, "delta_l": 1, "delta_r": 1, "lane_count": 3}\n')
        with pytest.raises(CorpusError, match="line 1"):
            load_sequence(directory)

    def test_out_of_order_labels(self, tmp_path, tiny_record):
        directory = write_sequence(tiny_record, tmp_path / "seq")
        (directory / LABELS).write_text('{"frame": 1, "delta_l": 1, "delta_r": 3, "lane_count": 3}\n')
        with pytest.raises(CorpusError, match="out of order"):
            load_sequence(directory)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(CorpusError) as info:
            read_manifest(tmp_path)
        assert info.value.path == tmp_path / MANIFEST

    def test_incomplete_manifest(self, tmp_path):
        (tmp_path / MANIFEST).write_text(json.dumps({"profile": "train"}))
        with pytest.raises(CorpusError, match="seed"):
            read_manifest(tmp_path)
