"""Plain containers shared by several modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import Box, validate_box_array


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def validate_score_array(scores: np.ndarray) -> None:
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ValueError(f"score vectors must have length >= 2 (background + classes), got shape {scores.shape}")
    if not np.all(np.isfinite(scores)) or scores.min(initial=0.0) < 0.0 or scores.max(initial=0.0) > 1.0:
        raise ValueError("score vector entries must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class FrameDetections:
    """Static-detector output for one frame.

    ``scores`` holds one (C+1)-way vector per box, background at column 0.
    ``ids`` are optional detector-assigned identities (``-1`` when absent).
    """

    frame: int
    boxes: np.ndarray
    scores: np.ndarray
    ids: np.ndarray | None = None

    def __post_init__(self):
        boxes = np.array(self.boxes, dtype=np.float64).reshape(-1, 4)
        scores = np.array(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            if scores.size or boxes.shape[0]:
                raise ValueError(f"frame {self.frame}: scores must be an (n, C+1) array")
            scores = scores.reshape(0, 2)
        validate_box_array(boxes)
        if boxes.shape[0]:
            validate_score_array(scores)
        if scores.shape[0] != boxes.shape[0]:
            raise ValueError(f"frame {self.frame}: {boxes.shape[0]} boxes but {scores.shape[0]} score vectors")
        ids = np.full(boxes.shape[0], -1, dtype=np.int64) if self.ids is None else np.array(self.ids, dtype=np.int64)
        object.__setattr__(self, "boxes", _readonly(boxes))
        object.__setattr__(self, "scores", _readonly(scores))
        object.__setattr__(self, "ids", _readonly(ids))

    def __len__(self) -> int:
        return self.boxes.shape[0]

    @property
    def num_scores(self) -> int:
        return self.scores.shape[1]

    @classmethod
    def empty(cls, frame: int, num_scores: int) -> "FrameDetections":
        return cls(frame, np.zeros((0, 4)), np.zeros((0, num_scores)))

    def subset(self, idx) -> "FrameDetections":
        idx = np.asarray(idx, dtype=np.int64)
        return FrameDetections(self.frame, self.boxes[idx], self.scores[idx], self.ids[idx])


class ScoredBox(NamedTuple):
    """One output detection: a box, its class label and score."""

    video_id: str
    frame: int
    box: tuple[float, float, float, float]
    label: int
    score: float
    tubelet_id: int = -1


@dataclass(frozen=True, eq=False)
class GroundTruthTrack:
    """A ground-truth object over a contiguous frame interval."""

    track_id: int
    class_id: int
    start_frame: int
    boxes: np.ndarray
    occluded: np.ndarray = field(default=None)

    def __post_init__(self):
        boxes = np.array(self.boxes, dtype=np.float64).reshape(-1, 4)
        if boxes.shape[0] == 0:
            raise ValueError(f"track {self.track_id} has no boxes")
        validate_box_array(boxes)
        occ = np.zeros(boxes.shape[0], dtype=np.bool_) if self.occluded is None else np.array(self.occluded, dtype=np.bool_)
        if occ.shape != (boxes.shape[0],):
            raise ValueError(f"track {self.track_id}: occlusion flags do not match box count")
        object.__setattr__(self, "boxes", _readonly(boxes))
        object.__setattr__(self, "occluded", _readonly(occ))

    @property
    def end_frame(self) -> int:
        """Last frame (inclusive)."""
        return self.start_frame + self.boxes.shape[0] - 1

    @property
    def frames(self) -> range:
        return range(self.start_frame, self.end_frame + 1)

    def __len__(self) -> int:
        return self.boxes.shape[0]

    def covers(self, frame: int) -> bool:
        return self.start_frame <= frame <= self.end_frame

    def box_at(self, frame: int) -> Box:
        return Box(*self.boxes[frame - self.start_frame])
