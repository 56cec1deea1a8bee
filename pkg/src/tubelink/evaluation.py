"""VOC-style AP/mAP, motion-speed and occlusion subsets, tubelet criteria."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .tubelet import Tubelet
from .types import GroundTruthTrack, ScoredBox

SPEED_LABELS = ("slow", "medium", "fast")
SUBSETS = ("slow", "medium", "fast", "occluded")


@dataclass
class APResult:
    ap: float | None
    recall: np.ndarray
    precision: np.ndarray
    n_pos: int


def average_precision(tp: np.ndarray, n_pos: int) -> APResult:
    """All-points interpolated AP from TP flags in rank order.

    ``tp`` holds 1 for a true positive and 0 for a false positive. Returns
    ``ap=None`` when there is no ground truth.
    """
    tp = np.asarray(tp, dtype=np.float64)
    if n_pos == 0:
        return APResult(None, np.zeros(0), np.zeros(0), 0)
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / n_pos
    precision = ctp / np.maximum(ctp + cfp, np.finfo(np.float64).eps)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    step = np.flatnonzero(mrec[1:] != mrec[:-1])
    ap = float(np.sum((mrec[step + 1] - mrec[step]) * mpre[step + 1]))
    return APResult(ap, recall, precision, n_pos)


def _rank(scores: np.ndarray, *tiebreak: np.ndarray) -> np.ndarray:
    """Indices by descending score; ties resolved by the extra keys ascending."""
    keys = tuple(reversed(tiebreak)) + (-scores,)
    return np.lexsort(keys).astype(np.int64)


class _GroundTruthIndex:
    """Ground-truth boxes of one class grouped by image ``(video, frame)``."""

    def __init__(self, tracks: Mapping[str, Sequence[GroundTruthTrack]], class_id: int, window: int, slow: float, fast: float):
        rows: dict[tuple[str, int], list] = defaultdict(list)
        for vid in sorted(tracks):
            vtracks = tracks[vid]
            speeds = motion_speed_split(vtracks, window, slow, fast)
            occ_frames = occluded_frames(vtracks)
            for tr in vtracks:
                if tr.class_id != class_id:
                    continue
                for k, frame in enumerate(tr.frames):
                    rows[(vid, frame)].append((tr.boxes[k], speeds[(tr.track_id, frame)], frame in occ_frames, tr.track_id))
        self.images = sorted(rows)
        self.image_id = {key: i for i, key in enumerate(self.images)}
        counts = [len(rows[key]) for key in self.images]
        self.ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        flat = [r for key in self.images for r in rows[key]]
        self.boxes = np.array([r[0] for r in flat], dtype=np.float64).reshape(-1, 4)
        self.speed = np.array([r[1] for r in flat], dtype=object)
        self.occluded_frame = np.array([r[2] for r in flat], dtype=np.bool_)
        # one extra empty image for detections where there is no ground truth
        self.ptr = np.append(self.ptr, self.ptr[-1])

    @property
    def n_boxes(self) -> int:
        return self.boxes.shape[0]

    def lookup(self, video_id: str, frame: int) -> int:
        return self.image_id.get((video_id, frame), len(self.images))


def compute_ap(
    detections: Sequence[ScoredBox],
    gt_boxes: Mapping[tuple[str, int], np.ndarray],
    match_iou: float = 0.5,
    gt_ignore: Mapping[tuple[str, int], np.ndarray] | None = None,
) -> APResult:
    """AP of one class.

    ``gt_boxes`` maps ``(video_id, frame)`` to an ``(n, 4)`` array. Each
    detection, by descending score, claims the unclaimed ground truth of
    highest IoU (at least ``match_iou``) in its frame. Detections claiming an
    ignored ground truth are dropped; ignored boxes do not count as positives.
    """
    if not 0.0 < match_iou < 1.0:
        raise ValueError(f"match_iou must lie in (0, 1), got {match_iou}")
    images = sorted(gt_boxes)
    image_id = {key: i for i, key in enumerate(images)}
    arrays = [np.asarray(gt_boxes[k], dtype=np.float64).reshape(-1, 4) for k in images]
    ptr = np.concatenate([[0], np.cumsum([a.shape[0] for a in arrays], dtype=np.int64)]).astype(np.int64)
    ptr = np.append(ptr, ptr[-1])  # empty image for detections without ground truth
    gboxes = np.concatenate(arrays) if arrays else np.zeros((0, 4))
    if gt_ignore is None:
        ignore = np.zeros(gboxes.shape[0], dtype=np.bool_)
    else:
        ignore = np.concatenate([np.asarray(gt_ignore.get(k, np.zeros(len(a), bool)), dtype=np.bool_) for k, a in zip(images, arrays)]) if arrays else np.zeros(0, np.bool_)
    n_pos = int((~ignore).sum())
    return _ap_from_arrays(
        np.array([image_id.get((d.video_id, d.frame), len(images)) for d in detections], dtype=np.int64),
        np.array([d.box for d in detections], dtype=np.float64).reshape(-1, 4),
        np.array([d.score for d in detections], dtype=np.float64),
        ptr, gboxes, ignore, n_pos, match_iou,
    )


def _ap_from_arrays(det_img, det_boxes, det_scores, ptr, gboxes, ignore, n_pos, match_iou) -> APResult:
    order = _rank(det_scores, det_img, det_boxes[:, 0], det_boxes[:, 1], det_boxes[:, 2], det_boxes[:, 3])
    labels = kernels.match_detections(det_img, np.ascontiguousarray(det_boxes), order, ptr, np.ascontiguousarray(gboxes), ignore, float(match_iou))
    ranked = labels[order]
    return average_precision((ranked[ranked >= 0] == 1).astype(np.float64), n_pos)


def paired_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise IoU of two equally long ``(n, 4)`` box arrays."""
    iw = np.maximum(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0.0)
    ih = np.maximum(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0.0)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a + area_b - inter)


def motion_iou(track: GroundTruthTrack, window: int = 10) -> np.ndarray:
    """Mean IoU of each box with the same track's boxes within ``window`` frames.

    A box without neighbours (a one-frame track) gets 1.0.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    boxes = track.boxes
    n = boxes.shape[0]
    total = np.zeros(n)
    count = np.zeros(n)
    for d in range(1, min(window, n - 1) + 1):
        v = paired_iou(boxes[:-d], boxes[d:])
        total[:-d] += v
        total[d:] += v
        count[:-d] += 1
        count[d:] += 1
    return np.where(count > 0, total / np.maximum(count, 1), 1.0)


def speed_label(m: float, slow: float = 0.9, fast: float = 0.7) -> str:
    if m > slow:
        return "slow"
    if m < fast:
        return "fast"
    return "medium"


def motion_speed_split(
    tracks: Iterable[GroundTruthTrack], window: int = 10, slow: float = 0.9, fast: float = 0.7
) -> dict[tuple[int, int], str]:
    """Label every ground-truth box ``(track_id, frame)`` slow, medium or fast."""
    out = {}
    for tr in tracks:
        for frame, m in zip(tr.frames, motion_iou(tr, window)):
            out[(tr.track_id, frame)] = speed_label(float(m), slow, fast)
    return out


def occluded_frames(tracks: Iterable[GroundTruthTrack]) -> set[int]:
    """Frames where more than half of the present objects are flagged occluded."""
    present: dict[int, int] = defaultdict(int)
    occluded: dict[int, int] = defaultdict(int)
    for tr in tracks:
        for k, frame in enumerate(tr.frames):
            present[frame] += 1
            occluded[frame] += int(tr.occluded[k])
    return {f for f, n in present.items() if occluded[f] * 2 > n}


def tubelet_ap(
    tubelets: Sequence[tuple[str, Tubelet]],
    tracks: Mapping[str, Sequence[GroundTruthTrack]],
    spans: Mapping[str, Sequence[tuple[int, int]]],
    class_id: int,
    match_iou: float = 0.5,
) -> tuple[APResult, APResult]:
    """Loose and strict tubelet-level AP of one class.

    Positives are (track, segment) pairs where a ``class_id`` track covers
    every frame of the segment span. Tubelets are ranked by aggregated score;
    in each frame a tubelet box claims the unclaimed positive box of highest
    IoU (at least ``match_iou``) of the same segment. A tubelet is a loose
    true positive if every box claims something; it is a strict true positive
    if in addition all claimed boxes belong to one track. Claims are made by
    the loose procedure, so strict true positives are a subset of loose ones.
    Returns ``(loose, strict)``.
    """
    seg_of: dict[tuple[str, tuple[int, int]], int] = {}
    unit_boxes: dict[tuple[str, int, int], list[tuple[int, np.ndarray]]] = defaultdict(list)
    n_pos = 0
    for vid in sorted(spans):
        for m, span in enumerate(spans[vid]):
            seg_of[(vid, tuple(span))] = m
            for tr in tracks.get(vid, ()):
                if tr.class_id != class_id or not (tr.start_frame <= span[0] and span[1] - 1 <= tr.end_frame):
                    continue
                n_pos += 1
                for frame in range(*span):
                    unit_boxes[(vid, m, frame)].append((tr.track_id, tr.boxes[frame - tr.start_frame]))

    scores = np.array([t.aggregated[class_id] for _, t in tubelets], dtype=np.float64)
    vids = sorted({v for v, _ in tubelets})
    vidx = np.array([vids.index(v) for v, _ in tubelets], dtype=np.int64)
    starts = np.array([t.start_frame for _, t in tubelets], dtype=np.int64)
    firsts = np.array([t.boxes[0] for _, t in tubelets]).reshape(-1, 4)
    order = _rank(scores, vidx, starts, firsts[:, 0], firsts[:, 1], firsts[:, 2], firsts[:, 3])

    claimed: set[tuple[str, int, int, int]] = set()
    loose = np.zeros(len(tubelets))
    strict = np.zeros(len(tubelets))
    for rank, i in enumerate(order):
        vid, t = tubelets[i]
        m = seg_of.get((vid, t.span))
        if m is None:
            continue
        picks = []
        for k, frame in enumerate(t.frames):
            cands = unit_boxes.get((vid, m, frame), [])
            best, bv = None, -1.0
            for j, (track_id, gbox) in enumerate(cands):
                if (vid, m, frame, j) in claimed:
                    continue
                v = float(kernels.iou_matrix_np(t.boxes[k:k + 1], gbox[None, :])[0, 0])
                if v >= match_iou and v > bv:
                    best, bv = (j, track_id), v
            if best is None:
                break
            picks.append((frame, best))
        if len(picks) != len(t):
            continue
        for frame, (j, _) in picks:
            claimed.add((vid, m, frame, j))
        loose[rank] = 1.0
        strict[rank] = float(len({track_id for _, (_, track_id) in picks}) == 1)
    return average_precision(loose, n_pos), average_precision(strict, n_pos)


def strict_tubelet_ap(tubelets, tracks, spans, class_id: int, match_iou: float = 0.5) -> APResult:
    return tubelet_ap(tubelets, tracks, spans, class_id, match_iou)[1]


def _mean(values: Iterable[float | None]) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class EvalReport:
    per_class_ap: dict[int, float]
    map: float | None
    subset_per_class_ap: dict[str, dict[int, float]]
    subset_map: dict[str, float | None]
    pr_curves: dict[int, tuple[np.ndarray, np.ndarray]] = field(repr=False)
    n_pos: dict[int, int]
    loose_tubelet_map: float | None = None
    strict_tubelet_map: float | None = None

    def to_dict(self) -> dict:
        return {
            "map": self.map,
            "per_class_ap": {str(c): v for c, v in sorted(self.per_class_ap.items())},
            "n_pos": {str(c): v for c, v in sorted(self.n_pos.items())},
            "subset_map": dict(self.subset_map),
            "subset_per_class_ap": {
                s: {str(c): v for c, v in sorted(d.items())} for s, d in self.subset_per_class_ap.items()
            },
            "loose_tubelet_map": self.loose_tubelet_map,
            "strict_tubelet_map": self.strict_tubelet_map,
        }


def evaluate(
    detections: Sequence[ScoredBox],
    tracks: Mapping[str, Sequence[GroundTruthTrack]],
    match_iou: float = 0.5,
    speed_window: int = 10,
    slow_threshold: float = 0.9,
    fast_threshold: float = 0.7,
    short_tubelets: Mapping[int, Sequence[tuple[str, Tubelet]]] | None = None,
    segment_spans: Mapping[str, Sequence[tuple[int, int]]] | None = None,
) -> EvalReport:
    """Evaluate labelled detections against ground-truth tracks.

    mAP averages the classes that have ground truth. Speed subsets keep only
    the ground truth of that speed (detections claiming other boxes are
    dropped); the occluded subset keeps only frames where more than half of
    the objects are occluded. Tubelet criteria are computed when
    ``short_tubelets`` (per class) and ``segment_spans`` are given.
    """
    classes = sorted({tr.class_id for vt in tracks.values() for tr in vt})
    by_class: dict[int, list[ScoredBox]] = defaultdict(list)
    for d in detections:
        by_class[d.label].append(d)

    occ = {(vid, f) for vid in tracks for f in occluded_frames(tracks[vid])}
    per_class: dict[int, float] = {}
    subset_pc: dict[str, dict[int, float]] = {s: {} for s in SUBSETS}
    curves: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    n_pos: dict[int, int] = {}
    for c in classes:
        index = _GroundTruthIndex(tracks, c, speed_window, slow_threshold, fast_threshold)
        dets = by_class.get(c, [])
        det_img = np.array([index.lookup(d.video_id, d.frame) for d in dets], dtype=np.int64)
        det_boxes = np.array([d.box for d in dets], dtype=np.float64).reshape(-1, 4)
        det_scores = np.array([d.score for d in dets], dtype=np.float64)

        none = np.zeros(index.n_boxes, dtype=np.bool_)
        res = _ap_from_arrays(det_img, det_boxes, det_scores, index.ptr, index.boxes, none, index.n_boxes, match_iou)
        per_class[c] = res.ap
        curves[c] = (res.recall, res.precision)
        n_pos[c] = res.n_pos

        for s in SPEED_LABELS:
            ignore = index.speed != s
            r = _ap_from_arrays(det_img, det_boxes, det_scores, index.ptr, index.boxes, ignore, int((~ignore).sum()), match_iou)
            if r.ap is not None:
                subset_pc[s][c] = r.ap
        keep = np.array([(d.video_id, d.frame) in occ for d in dets], dtype=np.bool_)
        ignore = ~index.occluded_frame
        r = _ap_from_arrays(det_img[keep], det_boxes[keep], det_scores[keep], index.ptr, index.boxes, ignore, int((~ignore).sum()), match_iou)
        if r.ap is not None:
            subset_pc["occluded"][c] = r.ap

    report = EvalReport(
        per_class_ap=per_class,
        map=_mean(per_class.values()),
        subset_per_class_ap=subset_pc,
        subset_map={s: _mean(subset_pc[s].values()) for s in SUBSETS},
        pr_curves=curves,
        n_pos=n_pos,
    )
    if short_tubelets is not None and segment_spans is not None:
        loose, strict = {}, {}
        for c in classes:
            lo, st = tubelet_ap(short_tubelets.get(c, []), tracks, segment_spans, c, match_iou)
            if lo.ap is not None:
                loose[c], strict[c] = lo.ap, st.ap
        report.loose_tubelet_map = _mean(loose.values())
        report.strict_tubelet_map = _mean(strict.values())
    return report
