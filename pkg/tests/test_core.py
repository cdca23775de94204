import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gvcot import BBox, BinaryMask, EditSample, JudgeVerdict, RasterImage, Rng, box_iou, normalize_box, round_half_away
from gvcot.errors import ContractViolation, DimensionMismatch

from oracles import raster_iou

coord = st.integers(0, 64)
box = st.tuples(coord, coord, coord, coord).map(normalize_box)


def test_round_half_away_ties():
    assert [round_half_away(v) for v in (0.5, 1.5, 2.5, -0.5, -2.5, 2.49)] == [1, 2, 3, -1, -3, 2]
    np.testing.assert_array_equal(round_half_away(np.array([0.5, -1.5, 3.2])), [1, -2, 3])


def test_normalize_box_orders_corners():
    assert normalize_box((10, 8, 2, 4)) == BBox(2, 4, 10, 8)


def test_box_iou_examples():
    assert box_iou(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0
    assert box_iou(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)) == pytest.approx(50 / 150)
    # edge-touching half-open boxes share no pixel
    assert box_iou(BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)) == 0.0
    assert box_iou(BBox(3, 3, 3, 9), BBox(3, 3, 3, 9)) == 0.0


@given(box, box)
def test_box_iou_matches_raster(a, b):
    assert box_iou(a, b) == pytest.approx(raster_iou(a, b), abs=1e-12)


@given(box, box)
def test_box_iou_symmetric_and_bounded(a, b):
    v = box_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == box_iou(b, a)


def test_raster_image_is_read_only_and_validated():
    img = RasterImage.filled(4, 3, (1, 2, 3))
    assert img.shape == (3, 4, 3)
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 9
    with pytest.raises((ValueError, TypeError)):
        RasterImage(np.zeros((2, 2, 2), dtype=np.uint8))


def test_grayscale_promotes_to_rgb():
    g = RasterImage(np.full((2, 2, 1), 7, dtype=np.uint8))
    assert g.to_rgb().shape == (2, 2, 3)


def test_edit_sample_contracts():
    src = RasterImage.filled(10, 10)
    s = EditSample("a", src, boxes=[(8, 8, 2, 2)])
    assert s.boxes == (BBox(2, 2, 8, 8),)
    with pytest.raises(ContractViolation):
        EditSample("b", src, boxes=[(0, 0, 11, 5)])
    with pytest.raises(DimensionMismatch):
        EditSample("c", src, mask=BinaryMask(np.zeros((5, 10), dtype=bool)))


def test_verdict_round_trip():
    v = JudgeVerdict(7.0, 9.0, "fine", "SemanticConsistency")
    assert JudgeVerdict.from_dict(v.to_dict()) == v


def test_rng_split_is_order_independent():
    a = Rng(5)
    a.normal(100)
    b = Rng(5)
    np.testing.assert_array_equal(a.split("x", 1).normal(4), b.split("x", 1).normal(4))
    assert not np.array_equal(Rng(5).split("x").normal(4), Rng(5).split("y").normal(4))
    assert math.isfinite(Rng(-1).uniform())
