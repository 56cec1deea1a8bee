import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tubelink.geometry import Box, EmptyInputError, InvalidBoxError, bounding_box, center_to_corner, intersection_area, iou, iou_matrix

RES = 1000
_EDGES = np.arange(RES, dtype=np.float64)


def _coverage(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Covered fraction of each unit pixel column/row for intervals [lo, hi]."""
    return np.clip(np.minimum(hi[:, None], _EDGES + 1) - np.maximum(lo[:, None], _EDGES), 0.0, 1.0)


def raster_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU of box pairs rasterised on a 1000x1000 grid with area-weighted pixels.

    A box's pixel mask is the product of its column and row coverage. The
    overlap of two boxes is the pixelwise product of their masks, which only
    agrees with the true overlap on fully covered pixels.
    """
    ax, ay = _coverage(a[:, 0], a[:, 2]), _coverage(a[:, 1], a[:, 3])
    bx, by = _coverage(b[:, 0], b[:, 2]), _coverage(b[:, 1], b[:, 3])
    inter = (ax * bx).sum(1) * (ay * by).sum(1)
    union = ax.sum(1) * ay.sum(1) + bx.sum(1) * by.sum(1) - inter
    return inter / union


def _pairs(rng, n):
    # sides of 200..800 pixels keep one-pixel boundary effects below the tolerance
    side = rng.uniform(200, 800, size=(n, 2))
    lo = rng.uniform(0, RES - side)
    a = np.concatenate([lo, lo + side], axis=1)
    side2 = np.minimum(side * rng.uniform(0.6, 1.4, size=(n, 2)), RES - 1)
    c = np.clip((a[:, :2] + a[:, 2:]) / 2 + rng.normal(0, 0.3, size=(n, 2)) * side, side2 / 2, RES - side2 / 2)
    return a, np.concatenate([c - side2 / 2, c + side2 / 2], axis=1)


def test_iou_matches_raster_oracle():
    rng = np.random.default_rng(7)
    a, b = _pairs(rng, 10_000)
    ours = np.array([iou(a[i], b[i]) for i in range(len(a))])
    err = np.abs(ours - raster_iou(a, b))
    assert err.max() <= 2e-3
    assert (ours > 0).mean() > 0.9  # the pairs mostly overlap


def test_iou_examples():
    assert iou((0, 0, 1, 1), (0, 0, 1, 1)) == 1.0
    assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0
    assert iou((0, 0, 1, 1), (0.5, 0, 1.5, 1)) == pytest.approx(1 / 3, abs=1e-15)


def test_half_shift_against_raster():
    a = np.array([[0.0, 0.0, 400.0, 400.0]])
    b = np.array([[200.0, 0.0, 600.0, 400.0]])
    assert raster_iou(a, b)[0] == pytest.approx(1 / 3, abs=1e-12)
    assert iou(a[0], b[0]) == pytest.approx(1 / 3, abs=1e-15)


@pytest.mark.parametrize("bad", [(0, 0, 0, 1), (0, 0, 1, 0), (2, 0, 1, 1), (0, 0, float("nan"), 1), (0, 0, float("inf"), 1)])
def test_invalid_boxes_rejected(bad):
    with pytest.raises(InvalidBoxError):
        Box(*bad)
    with pytest.raises(InvalidBoxError):
        iou(bad, (0, 0, 1, 1))


def test_bounding_box_examples():
    b = Box(1, 2, 3, 5)
    assert bounding_box([b]) == b
    assert bounding_box([b, b, b]) == b
    assert bounding_box([(0, 0, 1, 1), (2, 2, 3, 3)]) == Box(0, 0, 3, 3)
    with pytest.raises(EmptyInputError):
        bounding_box([])
    with pytest.raises(EmptyInputError):
        bounding_box(np.zeros((0, 4)))


def test_center_conversion():
    assert Box.from_center(5, 5, 4, 2) == Box(3, 4, 7, 6)
    assert Box(3, 4, 7, 6).to_center() == (5.0, 5.0, 4.0, 2.0)
    assert center_to_corner(np.array([[5.0, 5.0, 4.0, 2.0]])).tolist() == [[3.0, 4.0, 7.0, 6.0]]


def test_iou_matrix_shape_and_values(rng):
    from .conftest import random_boxes

    a, b = random_boxes(rng, 5), random_boxes(rng, 3)
    m = iou_matrix(a, b)
    assert m.shape == (5, 3)
    for i in range(5):
        for j in range(3):
            assert m[i, j] == iou(a[i], b[j])


# multiples of 1/8 keep every area exactly representable, so equalities are exact
coord = st.integers(-8000, 8000).map(lambda v: v / 8)
side = st.integers(1, 8000).map(lambda v: v / 8)
boxes = st.builds(lambda x, y, w, h: Box(x, y, x + w, y + h), coord, coord, side, side)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0
    assert iou(a, a) == 1.0
    if v == 1.0:
        assert a == b


@settings(max_examples=300, deadline=None)
@given(st.lists(boxes, min_size=1, max_size=8), st.randoms(use_true_random=False))
def test_bounding_box_contains_and_is_permutation_invariant(bs, rnd):
    bb = bounding_box(bs)
    for b in bs:
        assert intersection_area(b, bb) == b.area
        assert bb.x1 <= b.x1 and bb.y1 <= b.y1 and bb.x2 >= b.x2 and bb.y2 >= b.y2
    shuffled = list(bs)
    rnd.shuffle(shuffled)
    assert bounding_box(shuffled + shuffled[:2]) == bb
    assert bounding_box([bb]) == bb


@settings(max_examples=200, deadline=None)
@given(boxes, boxes, st.integers(-500, 500), st.integers(-500, 500))
def test_translation(a, b, dx, dy):
    assert iou(a.translate(dx, dy), b.translate(dx, dy)) == iou(a, b)
    assert bounding_box([a.translate(dx, dy), b.translate(dx, dy)]) == bounding_box([a, b]).translate(dx, dy)
