import itertools

import numpy as np
import pytest
import torch

from laneid.conventions import (
    MAX_LANES,
    Convention,
    LaneLabel,
    class_to_id,
    id_to_class,
    left_from_right,
    mirror,
    one_hot,
    right_from_left,
    triangular_residual,
)
from laneid.errors import LabelError

VALID = [LaneLabel.from_left(d, c) for c in range(1, MAX_LANES + 1) for d in range(1, c + 1)]


@pytest.mark.parametrize("delta_l,count,expected", [(1, 1, 1), (2, 4, 3), (4, 4, 1)])
def test_right_from_left(delta_l, count, expected):
    assert right_from_left(delta_l, count) == expected
    assert left_from_right(expected, count) == delta_l


@pytest.mark.parametrize("delta_l,count", [(0, 3), (4, 3), (1, 9), (1, 0)])
def test_out_of_range_rejected(delta_l, count):
    with pytest.raises(LabelError):
        right_from_left(delta_l, count)


def test_right_from_left_involution():
    for c in range(1, MAX_LANES + 1):
        for d in range(1, c + 1):
            assert right_from_left(right_from_left(d, c), c) == d


def test_label_validation():
    assert LaneLabel(2, 3, 4).as_dict() == {"delta_l": 2, "delta_r": 3, "lane_count": 4}
    with pytest.raises(LabelError, match="inconsistent"):
        LaneLabel(2, 2, 4)
    with pytest.raises(LabelError):
        LaneLabel(True, 1, 1)


def test_label_accepts_numpy_integers():
    label = LaneLabel(np.int64(2), np.int64(3), np.int64(4))
    assert type(label.delta_l) is int
    assert label == LaneLabel(2, 3, 4)


def test_mirror():
    assert mirror(LaneLabel(2, 3, 4)) == LaneLabel(3, 2, 4)
    assert mirror(LaneLabel(1, 1, 1)) == LaneLabel(1, 1, 1)
    for label in VALID:
        assert mirror(mirror(label)) == label


def test_id_for_convention():
    label = LaneLabel(2, 3, 4)
    assert label.id_for(Convention.LEFT) == 2
    assert label.id_for(Convention.RIGHT) == 3
    assert Convention.LEFT.other is Convention.RIGHT


@pytest.mark.parametrize("triple,expected", [((2, 3, 4), 0), ((1, 1, 1), 0), ((2, 2, 4), -1)])
def test_triangular_residual(triple, expected):
    assert triangular_residual(*triple) == expected


def test_residual_vanishes_on_every_valid_label():
    for label in VALID:
        assert triangular_residual(label.delta_l, label.delta_r, label.lane_count) == 0


def test_class_mapping():
    for lane_id, index in zip(range(1, MAX_LANES + 1), itertools.count()):
        assert id_to_class(lane_id) == index
        assert class_to_id(index) == lane_id
    with pytest.raises(LabelError):
        class_to_id(MAX_LANES)
    y = one_hot(3)
    assert y.dtype == torch.float64
    assert y.tolist() == [0, 0, 1, 0, 0, 0, 0, 0]
