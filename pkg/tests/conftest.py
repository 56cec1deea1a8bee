from __future__ import annotations

import numpy as np
import pytest

from tubelink.tubelet import Tubelet


def ref_iou(a, b) -> float:
    """Plain-Python IoU used by the reference implementations in the tests."""
    w = min(a[2], b[2]) - max(a[0], b[0])
    h = min(a[3], b[3]) - max(a[1], b[1])
    if w <= 0 or h <= 0:
        return 0.0
    inter = w * h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def random_boxes(rng: np.random.Generator, n: int, canvas: float = 100.0, min_side: float = 5.0, max_side: float = 40.0) -> np.ndarray:
    wh = rng.uniform(min_side, max_side, size=(n, 2))
    xy = rng.uniform(0.0, canvas - wh)
    return np.concatenate([xy, xy + wh], axis=1)


def random_scores(rng: np.random.Generator, n: int, num_classes: int = 3) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(n, num_classes + 1))


def tube(start: int, boxes, class_scores, num_classes: int = 1, first_segment: int = 0, last_segment: int | None = None, mode: str = "mean_max") -> Tubelet:
    """Tubelet whose class-1 score per frame is given; background takes 1 - score."""
    s = np.asarray(class_scores, dtype=np.float64)
    scores = np.zeros((s.shape[0], num_classes + 1))
    scores[:, 1] = s
    scores[:, 0] = 1.0 - s
    return Tubelet(start, np.asarray(boxes, dtype=np.float64), scores, mode=mode, first_segment=first_segment, last_segment=last_segment)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
