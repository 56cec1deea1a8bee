"""Short-tubelet assembly inside one segment.

Per-frame detections of a segment are chained by greedy one-to-one IoU
matching between consecutive frames; the bounding box of a chain is its cuboid
proposal. Chains covering the whole segment become short tubelets. A
ground-truth-jitter cuboid generator stands in for a learned proposal network
in controlled experiments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .geometry import Box, bounding_box
from .tubelet import DEFAULT_MODE, Tubelet
from .types import FrameDetections, GroundTruthTrack


@dataclass(frozen=True)
class Cuboid:
    """A 2D box standing for the same box in every frame of ``span``."""

    box: Box
    span: tuple[int, int]


class Chain(NamedTuple):
    cuboid: Cuboid
    frames: tuple[int, ...]
    det_ids: tuple[int, ...]
    boxes: np.ndarray
    scores: np.ndarray


def pair_union_proposals(segment: Sequence[FrameDetections], pair_iou_threshold: float = 0.3) -> list[Chain]:
    """Chain detections across the consecutive frames of ``segment``.

    Returns every chain, including partial ones and single unmatched boxes,
    ordered by first frame then detection index.
    """
    segment = list(segment)
    for prev, cur in zip(segment, segment[1:]):
        if cur.frame != prev.frame + 1:
            raise ValueError(f"segment frames must be consecutive, got {prev.frame} then {cur.frame}")
    widths = {fd.num_scores for fd in segment if len(fd)}
    if len(widths) > 1:
        raise ValueError(f"score vectors of one segment have different lengths: {sorted(widths)}")

    nxt = []
    has_prev = [np.zeros(len(fd), dtype=np.bool_) for fd in segment]
    for f in range(len(segment) - 1):
        a, b = segment[f], segment[f + 1]
        link = np.full(len(a), -1, dtype=np.int64)
        if len(a) and len(b):
            rows, cols = kernels.greedy_match(kernels.iou_matrix(a.boxes, b.boxes), float(pair_iou_threshold))
            link[rows] = cols
            has_prev[f + 1][cols] = True
        nxt.append(link)

    chains = []
    for f, fd in enumerate(segment):
        for d in range(len(fd)):
            if has_prev[f][d]:
                continue
            ids, g = [d], f
            while g < len(nxt) and nxt[g][ids[-1]] >= 0:
                ids.append(int(nxt[g][ids[-1]]))
                g += 1
            frames = tuple(segment[f].frame + k for k in range(len(ids)))
            boxes = np.stack([segment[f + k].boxes[i] for k, i in enumerate(ids)])
            scores = np.stack([segment[f + k].scores[i] for k, i in enumerate(ids)])
            cuboid = Cuboid(bounding_box(boxes), (frames[0], frames[-1] + 1))
            chains.append(Chain(cuboid, frames, tuple(ids), boxes, scores))
    return chains


def assemble_short_tubelets(
    chains: Sequence[Chain],
    span: tuple[int, int],
    mode: str = DEFAULT_MODE,
    segment_index: int = 0,
) -> list[Tubelet]:
    """Turn the chains covering all of ``span`` (half-open) into tubelets."""
    out = []
    for ch in chains:
        if ch.cuboid.span != tuple(span):
            continue
        out.append(
            Tubelet(
                ch.frames[0], ch.boxes, ch.scores, mode=mode, det_ids=np.asarray(ch.det_ids),
                first_segment=segment_index, last_segment=segment_index,
            )
        )
    return out


def _perturb(box: Box, rng: np.random.Generator, scale: float, shift: float) -> Box:
    sx, sy = np.exp(rng.normal(0.0, scale, size=2)) if scale > 0 else (1.0, 1.0)
    dx, dy = rng.normal(0.0, shift, size=2) if shift > 0 else (0.0, 0.0)
    if scale == 0 and shift == 0:
        return box
    cx, cy, w, h = box.to_center()
    return Box.from_center(cx + dx * w, cy + dy * h, w * sx, h * sy)


def oracle_cuboids(
    tracks: Sequence[GroundTruthTrack],
    span: tuple[int, int],
    jitter_scale: float = 0.0,
    jitter_shift: float = 0.0,
    seed: int = 0,
) -> list[Cuboid]:
    """Ground-truth cuboids of the tracks alive over all of ``span``, with noise.

    Scale noise multiplies width and height by ``exp(N(0, jitter_scale))``;
    shift noise moves the center by ``N(0, jitter_shift)`` box sizes.
    """
    if jitter_scale < 0 or jitter_shift < 0:
        raise ValueError("jitter magnitudes must be non-negative")
    start, stop = span
    rng = np.random.default_rng(seed)
    out = []
    for tr in sorted(tracks, key=lambda t: t.track_id):
        if not (tr.start_frame <= start and stop - 1 <= tr.end_frame):
            continue
        gt_box = bounding_box(tr.boxes[start - tr.start_frame:stop - tr.start_frame])
        out.append(Cuboid(_perturb(gt_box, rng, jitter_scale, jitter_shift), (start, stop)))
    return out


def cuboid_recall(
    cuboids: Sequence[Cuboid],
    tracks: Sequence[GroundTruthTrack],
    span: tuple[int, int],
    iou_threshold: float = 0.5,
) -> float:
    """Fraction of ground-truth cuboids over ``span`` hit by some proposal."""
    truth = oracle_cuboids(tracks, span)
    if not truth:
        return 1.0
    if not cuboids:
        return 0.0
    gt = np.array([c.box.as_tuple() for c in truth])
    prop = np.array([c.box.as_tuple() for c in cuboids])
    hit = kernels.iou_matrix(gt, prop).max(axis=1) >= iou_threshold
    return float(hit.mean())
