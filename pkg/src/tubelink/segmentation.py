"""Split a video into overlapping fixed-length segments."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class SegmentPlan:
    """Segments of ``segment_length`` frames with stride ``segment_length - 1``.

    Frames are 1-based. Consecutive segments share one frame. When the last
    segment would run past ``n_frames`` its tail repeats frame ``n_frames``.
    """

    n_frames: int
    segment_length: int
    segments: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return len(self.segments)

    def real_frames(self, m: int) -> tuple[int, ...]:
        """Frames of segment ``m`` with the padding copies removed."""
        seg = self.segments[m]
        return tuple(dict.fromkeys(seg))

    def span(self, m: int) -> tuple[int, int]:
        """Half-open interval of real frames covered by segment ``m``."""
        frames = self.real_frames(m)
        return (frames[0], frames[-1] + 1)


def plan_segments(n_frames: int, segment_length: int = 2) -> SegmentPlan:
    if segment_length < 2:
        raise ValueError(
            f"segment length must be >= 2 so that consecutive segments share a frame, got {segment_length}"
        )
    if n_frames < 1:
        raise ValueError(f"a video needs at least one frame, got {n_frames}")
    stride = segment_length - 1
    segments = []
    start = 1
    while True:
        segments.append(tuple(min(start + k, n_frames) for k in range(segment_length)))
        if start + segment_length - 1 >= n_frames:
            break
        start += stride
    return SegmentPlan(n_frames, segment_length, tuple(segments))
