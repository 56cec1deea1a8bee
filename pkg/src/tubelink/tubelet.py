"""Tubelets, score aggregation, tubelet overlap and tubelet NMS."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .geometry import EmptyInputError, validate_box_array
from .types import _readonly, validate_score_array

AGGREGATION_MODES = ("mean", "max", "mean_max")
DEFAULT_MODE = "mean_max"


class SpanMismatchError(ValueError):
    """Tubelets compared or suppressed together do not cover the same frames."""


def aggregate_scores(vectors, mode: str = DEFAULT_MODE) -> np.ndarray:
    """Combine per-frame score vectors into one tubelet score vector.

    ``mode`` is ``"mean"``, ``"max"`` or ``"mean_max"``; the last one is the
    elementwise average of the mean and the max over frames.
    """
    if mode not in AGGREGATION_MODES:
        raise ValueError(f"unknown aggregation mode {mode!r}; expected one of {AGGREGATION_MODES}")
    if isinstance(vectors, np.ndarray):
        arr = np.asarray(vectors, dtype=np.float64)
    else:
        vectors = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
        if not vectors:
            raise EmptyInputError("cannot aggregate an empty list of score vectors")
        if len({v.shape[0] for v in vectors}) != 1:
            raise ValueError("score vectors have mismatched lengths")
        arr = np.stack(vectors)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EmptyInputError("cannot aggregate an empty list of score vectors")
    if mode == "mean":
        return arr.mean(axis=0)
    if mode == "max":
        return arr.max(axis=0)
    return (arr.mean(axis=0) + arr.max(axis=0)) / 2.0


@dataclass(frozen=True, eq=False)
class Tubelet:
    """Boxes with score vectors over consecutive frames.

    ``boxes`` is ``(L, 4)`` and ``scores`` is ``(L, C+1)`` for frames
    ``start_frame .. start_frame + L - 1``. ``aggregated`` is derived from
    ``scores`` on construction. ``det_ids`` records which input detection of
    each frame a box came from (``-1`` if unknown) and ``first_segment`` /
    ``last_segment`` the range of video segments the tubelet spans.
    """

    start_frame: int
    boxes: np.ndarray
    scores: np.ndarray
    mode: str = DEFAULT_MODE
    det_ids: np.ndarray | None = None
    first_segment: int = 0
    last_segment: int | None = None
    aggregated: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        boxes = np.array(self.boxes, dtype=np.float64).reshape(-1, 4)
        scores = np.array(self.scores, dtype=np.float64)
        if boxes.shape[0] == 0:
            raise EmptyInputError("a tubelet needs at least one box")
        validate_box_array(boxes)
        validate_score_array(scores)
        if scores.shape[0] != boxes.shape[0]:
            raise ValueError("tubelet needs exactly one score vector per box")
        det_ids = np.full(boxes.shape[0], -1, dtype=np.int64) if self.det_ids is None else np.array(self.det_ids, dtype=np.int64)
        if det_ids.shape != (boxes.shape[0],):
            raise ValueError("det_ids must have one entry per box")
        last = self.first_segment if self.last_segment is None else self.last_segment
        if last < self.first_segment:
            raise ValueError("last_segment precedes first_segment")
        object.__setattr__(self, "start_frame", int(self.start_frame))
        object.__setattr__(self, "boxes", _readonly(boxes))
        object.__setattr__(self, "scores", _readonly(scores))
        object.__setattr__(self, "det_ids", _readonly(det_ids))
        object.__setattr__(self, "last_segment", int(last))
        object.__setattr__(self, "aggregated", _readonly(aggregate_scores(scores, self.mode)))

    @classmethod
    def _trusted(cls, start_frame, boxes, scores, mode, det_ids, first_segment, last_segment) -> "Tubelet":
        # Parts already validated by the tubelets they came from.
        t = object.__new__(cls)
        for name, val in (
            ("start_frame", int(start_frame)), ("boxes", _readonly(boxes)), ("scores", _readonly(scores)),
            ("mode", mode), ("det_ids", _readonly(det_ids)), ("first_segment", int(first_segment)),
            ("last_segment", int(last_segment)), ("aggregated", _readonly(aggregate_scores(scores, mode))),
        ):
            object.__setattr__(t, name, val)
        return t

    def __len__(self) -> int:
        return self.boxes.shape[0]

    @property
    def end_frame(self) -> int:
        """Last covered frame (inclusive)."""
        return self.start_frame + self.boxes.shape[0] - 1

    @property
    def span(self) -> tuple[int, int]:
        """Half-open frame interval ``[start, end + 1)``."""
        return (self.start_frame, self.start_frame + self.boxes.shape[0])

    @property
    def frames(self) -> range:
        return range(*self.span)

    @property
    def num_classes(self) -> int:
        return self.scores.shape[1] - 1

    def class_score(self, class_id: int) -> float:
        return float(self.aggregated[class_id])

    def box_at(self, frame: int) -> np.ndarray:
        return self.boxes[frame - self.start_frame]

    def score_at(self, frame: int) -> np.ndarray:
        return self.scores[frame - self.start_frame]


def _check_same_span(tubelets: Sequence[Tubelet]) -> None:
    spans = {t.span for t in tubelets}
    if len(spans) > 1:
        raise SpanMismatchError(f"tubelets cover different frame spans: {sorted(spans)}")


def tubelet_overlap(a: Tubelet, b: Tubelet) -> float:
    """Minimum over the shared frames of the per-frame box IoU."""
    if a.span != b.span:
        raise SpanMismatchError(f"overlap is defined for tubelets of one segment, got spans {a.span} and {b.span}")
    ious = np.diag(kernels.iou_matrix_np(a.boxes, b.boxes))
    return float(ious.min())


def overlap_matrix(tubelets: Sequence[Tubelet]) -> np.ndarray:
    """Pairwise :func:`tubelet_overlap` for tubelets sharing one span."""
    _check_same_span(tubelets)
    if not tubelets:
        return np.empty((0, 0))
    stacked = np.ascontiguousarray(np.stack([t.boxes for t in tubelets]))
    return kernels.min_iou_matrix(stacked)


def tubelet_nms(tubelets: Sequence[Tubelet], class_id: int, threshold: float = 0.4) -> list[Tubelet]:
    """Greedy tubelet suppression on the aggregated score of ``class_id``.

    Tubelets are visited by descending score (ties: lower list index first);
    each kept tubelet removes the remaining ones whose overlap with it exceeds
    ``threshold``. Kept tubelets are returned in keep order.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    tubelets = list(tubelets)
    if not tubelets:
        return []
    if not 1 <= class_id <= tubelets[0].num_classes:
        raise ValueError(f"class_id {class_id} outside 1..{tubelets[0].num_classes}")
    overlap = overlap_matrix(tubelets)
    scores = np.array([t.aggregated[class_id] for t in tubelets])
    order = np.argsort(-scores, kind="stable").astype(np.int64)
    keep = kernels.greedy_suppress(overlap, order, float(threshold))
    return [tubelets[i] for i in keep]
