import os
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

# Keep logs, corpora and checkpoints of the test run out of the repository data directory.
os.environ.setdefault("LANEID_DATA", tempfile.mkdtemp(prefix="laneid-test-"))
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from laneid.model import ModelConfig  # noqa: E402
from laneid.synthgen import SceneSpec, generate_sequence  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale acceptance runs (enable with LANEID_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("LANEID_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set LANEID_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def tiny_config():
    return ModelConfig.tiny("convlstm")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_record():
    """Four 16x32 frames of a three-lane road with one lane change"""
    spec = SceneSpec(
        seed=7,
        lane_count=3,
        frames=4,
        ego_schedule=((0, 1), (2, 2)),
        height=16,
        width=32,
    )
    return generate_sequence(spec, "tiny-00000")
