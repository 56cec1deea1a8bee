"""Axis-aligned box arithmetic.

Boxes use continuous corner coordinates ``(x1, y1, x2, y2)`` and
``area = (x2 - x1) * (y2 - y1)``; there is no ``+1`` pixel convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class InvalidBoxError(ValueError):
    """A box with non-finite coordinates or non-positive width/height."""


class EmptyInputError(ValueError):
    """An operation that needs at least one element got none."""


@dataclass(frozen=True, slots=True)
class Box:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        for name, v in zip(("x1", "y1", "x2", "y2"), coords):
            object.__setattr__(self, name, float(v))
        if not all(math.isfinite(v) for v in coords):
            raise InvalidBoxError(f"non-finite box coordinates {coords}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise InvalidBoxError(f"box {coords} has non-positive width or height")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "Box":
        """Build a box from center form ``(x, y, w, h)``."""
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def to_center(self) -> tuple[float, float, float, float]:
        return ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0, self.width, self.height)

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)


BoxLike = Box | Sequence[float]


def _coords(b: BoxLike) -> tuple[float, float, float, float]:
    if isinstance(b, Box):
        return b.as_tuple()
    return Box(*b).as_tuple()


def as_box_array(boxes: Iterable[BoxLike] | np.ndarray) -> np.ndarray:
    """Stack boxes into a validated float64 ``(n, 4)`` array."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        validate_box_array(arr)
        return arr
    rows = [_coords(b) for b in boxes]
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)


def validate_box_array(arr: np.ndarray) -> None:
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise InvalidBoxError(f"expected an (n, 4) box array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidBoxError("non-finite box coordinates")
    bad = ~((arr[:, 2] > arr[:, 0]) & (arr[:, 3] > arr[:, 1]))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise InvalidBoxError(f"box {tuple(arr[i])} has non-positive width or height")


def center_to_corner(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64).reshape(-1, 4)
    half_w = arr[:, 2] / 2.0
    half_h = arr[:, 3] / 2.0
    return np.stack([arr[:, 0] - half_w, arr[:, 1] - half_h, arr[:, 0] + half_w, arr[:, 1] + half_h], axis=1)


def iou(a: BoxLike, b: BoxLike) -> float:
    """Intersection over union of two boxes."""
    ca, cb = _coords(a), _coords(b)
    return float(kernels.iou_matrix_np(np.array([ca]), np.array([cb]))[0, 0])


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` box arrays."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 4)
    return kernels.iou_matrix(a, b)


def bounding_box(boxes: Iterable[BoxLike] | np.ndarray) -> Box:
    """Smallest box containing every input box."""
    arr = boxes if isinstance(boxes, np.ndarray) else as_box_array(list(boxes))
    arr = np.asarray(arr, dtype=np.float64).reshape(-1, 4)
    if arr.shape[0] == 0:
        raise EmptyInputError("bounding_box needs at least one box: no tubelet to bound")
    return Box(arr[:, 0].min(), arr[:, 1].min(), arr[:, 2].max(), arr[:, 3].max())


def intersection_area(a: BoxLike, b: BoxLike) -> float:
    ca, cb = _coords(a), _coords(b)
    w = min(ca[2], cb[2]) - max(ca[0], cb[0])
    h = min(ca[3], cb[3]) - max(ca[1], cb[1])
    return max(w, 0.0) * max(h, 0.0)
