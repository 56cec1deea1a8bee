"""Greedy linking of short tubelets through their shared frames.

Tubelets of consecutive segments share one frame. Linking repeatedly pops the
best-scoring tubelet from a pool, looks for a temporally adjacent tubelet whose
box in the shared frame overlaps enough, merges the two (keeping the better of
the two boxes in the shared frame), rescores the merged tubelet and pushes it
back. A popped tubelet without a partner is final.
"""

from __future__ import annotations

import heapq
from collections import defaultdict
from typing import NamedTuple, Sequence

import numpy as np

from .kernels import pair_iou_py
from .tubelet import Tubelet


class LinkingError(ValueError):
    """Input tubelets disagree with the segment layout they claim."""


def canonical_key(t: Tubelet) -> tuple:
    """Total order on tubelets that does not depend on list position."""
    return (t.start_frame, t.first_segment, len(t), tuple(t.boxes.ravel()), tuple(t.scores.ravel()))


class _Chain:
    """A tubelet under construction: frame slices of short tubelets plus its class-score trace."""

    __slots__ = ("parts", "vals", "score", "first_segment", "last_segment", "start_frame", "end_frame", "head", "tail")

    def __init__(self, parts: list[tuple[Tubelet, int, int]], vals: list[float], mode: str, first_segment: int, last_segment: int):
        self.parts = parts
        self.vals = vals
        self.score = _aggregate(vals, mode)
        self.first_segment = first_segment
        self.last_segment = last_segment
        t, lo, _ = parts[0]
        self.start_frame = t.start_frame + lo
        self.end_frame = self.start_frame + len(vals) - 1
        self.head = tuple(t.boxes[lo].tolist())
        t, _, hi = parts[-1]
        self.tail = tuple(t.boxes[hi - 1].tolist())

    @classmethod
    def of(cls, t: Tubelet, class_id: int) -> "_Chain":
        return cls([(t, 0, len(t))], t.scores[:, class_id].tolist(), t.mode, t.first_segment, t.last_segment)

    def build(self) -> Tubelet:
        if len(self.parts) == 1 and self.parts[0][1] == 0 and self.parts[0][2] == len(self.parts[0][0]):
            return self.parts[0][0]
        t0 = self.parts[0][0]
        return Tubelet._trusted(
            self.start_frame,
            np.concatenate([t.boxes[lo:hi] for t, lo, hi in self.parts]),
            np.concatenate([t.scores[lo:hi] for t, lo, hi in self.parts]),
            t0.mode,
            np.concatenate([t.det_ids[lo:hi] for t, lo, hi in self.parts]),
            self.first_segment,
            self.last_segment,
        )


def _aggregate(vals: list[float], mode: str) -> float:
    if mode == "mean":
        return sum(vals) / len(vals)
    if mode == "max":
        return max(vals)
    return (sum(vals) / len(vals) + max(vals)) / 2.0


def _merge_chains(popped: _Chain, other: _Chain, mode: str) -> _Chain:
    left, right = (popped, other) if other.first_segment == popped.last_segment + 1 else (other, popped)
    keep_left = (left.vals[-1], left.score, left is popped) > (right.vals[0], right.score, right is popped)
    if keep_left:
        t, lo, hi = right.parts[0]
        parts = left.parts + ([(t, lo + 1, hi)] if hi - lo > 1 else []) + right.parts[1:]
        vals = left.vals + right.vals[1:]
    else:
        t, lo, hi = left.parts[-1]
        parts = left.parts[:-1] + ([(t, lo, hi - 1)] if hi - lo > 1 else []) + right.parts
        vals = left.vals[:-1] + right.vals
    return _Chain(parts, vals, mode, left.first_segment, right.last_segment)


class _Pool:
    """Live chains keyed by (class score desc, start frame asc, creation index asc)."""

    def __init__(self):
        self.heap: list[tuple[float, int, int]] = []
        self.live: dict[int, _Chain] = {}
        self.by_first: dict[int, set[int]] = defaultdict(set)
        self.by_last: dict[int, set[int]] = defaultdict(set)
        self.next_uid = 0

    def push(self, c: _Chain) -> None:
        uid = self.next_uid
        self.next_uid += 1
        self.live[uid] = c
        self.by_first[c.first_segment].add(uid)
        self.by_last[c.last_segment].add(uid)
        heapq.heappush(self.heap, (-c.score, c.start_frame, uid))

    def remove(self, uid: int) -> _Chain:
        c = self.live.pop(uid)
        self.by_first[c.first_segment].discard(uid)
        self.by_last[c.last_segment].discard(uid)
        return c

    def pop(self) -> _Chain:
        while True:
            uid = heapq.heappop(self.heap)[2]
            if uid in self.live:
                return self.remove(uid)


def _check_layout(tubelets: Sequence[Tubelet]) -> None:
    first_frame: dict[int, int] = {}
    last_frame: dict[int, int] = {}
    for t in tubelets:
        for table, seg, frame in ((first_frame, t.first_segment, t.start_frame), (last_frame, t.last_segment, t.end_frame)):
            if table.setdefault(seg, frame) != frame:
                raise LinkingError(f"tubelets of segment {seg} do not share one frame span")
    for seg, end in last_frame.items():
        nxt = first_frame.get(seg + 1)
        if nxt is not None and nxt != end:
            raise LinkingError(f"segment {seg} ends at frame {end} but segment {seg + 1} starts at frame {nxt}")


def merge_tubelets(popped: Tubelet, other: Tubelet, class_id: int) -> Tubelet:
    """Join two tubelets that share their boundary frame.

    The shared frame keeps the box with the higher per-frame score for
    ``class_id``; ties go to the tubelet with the higher aggregated score, then
    to ``popped``. The result is rescored from its per-frame vectors.
    """
    if other.first_segment == popped.last_segment + 1:
        left, right = popped, other
    elif other.last_segment == popped.first_segment - 1:
        left, right = other, popped
    else:
        raise LinkingError("tubelets are not temporally adjacent")
    if left.end_frame != right.start_frame:
        raise LinkingError("adjacent tubelets do not share a frame")
    lkey = (left.scores[-1, class_id], left.aggregated[class_id], left is popped)
    rkey = (right.scores[0, class_id], right.aggregated[class_id], right is popped)
    keep_left = lkey > rkey
    if keep_left:
        boxes = np.concatenate([left.boxes, right.boxes[1:]])
        scores = np.concatenate([left.scores, right.scores[1:]])
        det_ids = np.concatenate([left.det_ids, right.det_ids[1:]])
    else:
        boxes = np.concatenate([left.boxes[:-1], right.boxes])
        scores = np.concatenate([left.scores[:-1], right.scores])
        det_ids = np.concatenate([left.det_ids[:-1], right.det_ids])
    return Tubelet._trusted(left.start_frame, boxes, scores, popped.mode, det_ids, left.first_segment, right.last_segment)


def link_short_tubelets(tubelets: Sequence[Tubelet], class_id: int, link_iou_threshold: float = 0.4) -> list[Tubelet]:
    """Greedily merge short tubelets of one class into long tubelets.

    A popped tubelet is merged with the adjacent pool member whose box in the
    shared frame has IoU above ``link_iou_threshold``; among several, the
    highest IoU wins, then the higher class score, then the pool order. Long
    tubelets are returned in the order they were finalized.
    """
    if not 0.0 < link_iou_threshold < 1.0:
        raise ValueError(f"link threshold must lie in (0, 1), got {link_iou_threshold}")
    tubelets = list(tubelets)
    _check_layout(tubelets)
    if not tubelets:
        return []
    mode = tubelets[0].mode
    if any(t.mode != mode for t in tubelets):
        raise LinkingError("tubelets use different aggregation modes")
    pool = _Pool()
    for t in sorted(tubelets, key=canonical_key):
        pool.push(_Chain.of(t, class_id))

    finalized: list[Tubelet] = []
    while pool.live:
        t = pool.pop()
        best = None
        for ref, cand_ids, right in (
            (t.tail, pool.by_first.get(t.last_segment + 1, ()), True),
            (t.head, pool.by_last.get(t.first_segment - 1, ()), False),
        ):
            for cid in sorted(cand_ids):
                c = pool.live[cid]
                v = pair_iou_py(ref, c.head if right else c.tail)
                if v <= link_iou_threshold:
                    continue
                rank = (v, c.score, -c.start_frame, -cid)
                if best is None or rank > best[0]:
                    best = (rank, cid)
        if best is None:
            finalized.append(t.build())
            continue
        pool.push(_merge_chains(t, pool.remove(best[1]), mode))
    return finalized


class EmittedBox(NamedTuple):
    frame: int
    box: tuple[float, float, float, float]
    scores: np.ndarray
    tubelet_id: int
    det_id: int


def emit_frame_detections(long_tubelets: Sequence[Tubelet]) -> dict[int, list[EmittedBox]]:
    """Spread each tubelet's aggregated score vector over its boxes.

    Returns ``frame -> boxes``; a tubelet's id is its position in the input.
    """
    out: dict[int, list[EmittedBox]] = defaultdict(list)
    for tid, t in enumerate(long_tubelets):
        for k, frame in enumerate(t.frames):
            out[frame].append(EmittedBox(frame, tuple(map(float, t.boxes[k])), t.aggregated, tid, int(t.det_ids[k])))
    return dict(sorted(out.items()))
