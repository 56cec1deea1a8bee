"""End-to-end orchestration: segment, assemble, suppress, link, emit, evaluate.

Methods compared by :func:`run_ablation` (all per class):

``static``            per-frame NMS on raw detections
``seqnms``            Seq-NMS neighbour-frame linking on raw detections
``tubelets-no-link``  short tubelets, boxes carry the tubelet score, per-frame NMS
``tubelets-tnms``     as above with tubelet NMS inside each segment
``union-seqnms``      ``tubelets-no-link`` output rescored by Seq-NMS
``full``              tubelet NMS, short-tubelet linking, tubelet score on every box
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .assembly import assemble_short_tubelets, pair_union_proposals
from .baselines import frame_nms, nms, seq_nms
from .evaluation import EvalReport, evaluate
from .linking import emit_frame_detections, link_short_tubelets
from .segmentation import SegmentPlan, plan_segments
from .tubelet import AGGREGATION_MODES, Tubelet, tubelet_nms
from .types import FrameDetections, GroundTruthTrack, ScoredBox

METHODS = ("static", "seqnms", "tubelets-no-link", "tubelets-tnms", "union-seqnms", "full")
BASELINES = {"none": "full", "static": "static", "seqnms": "seqnms", "union-seqnms": "union-seqnms"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    segment_length: int = 2
    tnms_threshold: float = 0.4
    link_threshold: float = 0.4
    pair_iou_threshold: float = 0.3
    aggregation: str = "mean_max"
    baseline: str = "none"
    nms_threshold: float = 0.4
    seqnms_link_iou: float = 0.5
    seqnms_rescore: str = "avg"
    match_iou: float = 0.5
    speed_window: int = 10
    slow_threshold: float = 0.9
    fast_threshold: float = 0.7
    num_classes: int = 0
    workers: int = 1
    seed: int = 42

    def validate(self) -> None:
        for name in ("tnms_threshold", "link_threshold", "pair_iou_threshold", "nms_threshold",
                     "seqnms_link_iou", "match_iou", "slow_threshold", "fast_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.segment_length < 1:
            raise ConfigError(f"segment_length must be >= 1, got {self.segment_length}")
        if self.aggregation not in AGGREGATION_MODES:
            raise ConfigError(f"aggregation must be one of {AGGREGATION_MODES}, got {self.aggregation!r}")
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {sorted(BASELINES)}, got {self.baseline!r}")
        if self.seqnms_rescore not in ("avg", "max"):
            raise ConfigError(f"seqnms_rescore must be avg or max, got {self.seqnms_rescore!r}")
        if self.speed_window < 1 or self.workers < 1 or self.num_classes < 0:
            raise ConfigError("speed_window and workers must be >= 1, num_classes >= 0")
        if self.fast_threshold > self.slow_threshold:
            raise ConfigError("fast_threshold must not exceed slow_threshold")

    def to_dict(self) -> dict:
        return asdict(self)


def config_fields() -> dict[str, type]:
    return {f.name: f.type for f in fields(PipelineConfig)}


@dataclass
class VideoOutput:
    detections: list[ScoredBox]
    long_tubelets: dict[int, list[Tubelet]] = field(default_factory=dict)
    short_tubelets: dict[int, list[Tubelet]] = field(default_factory=dict)
    spans: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class PipelineResult:
    config: PipelineConfig
    method: str
    detections: list[ScoredBox]
    long_tubelets: dict[str, dict[int, list[Tubelet]]]
    short_tubelets: dict[str, dict[int, list[Tubelet]]]
    spans: dict[str, list[tuple[int, int]]]
    report: EvalReport | None = None


# ---------------------------------------------------------------------------
# per-video stages


def build_short_tubelets(frames: Sequence[FrameDetections], plan: SegmentPlan, config: PipelineConfig) -> list[list[Tubelet]]:
    """Class-agnostic short tubelets of every segment of ``plan``.

    Padding copies at the end of the last segment are dropped before chaining:
    chaining a frame with its own copy is the identity.
    """
    out = []
    for m in range(len(plan)):
        real = plan.real_frames(m)
        seg = [frames[f - 1] for f in real]
        chains = pair_union_proposals(seg, config.pair_iou_threshold)
        out.append(assemble_short_tubelets(chains, plan.span(m), config.aggregation, segment_index=m))
    return out


def _passthrough(frames: Sequence[FrameDetections], per_segment: Sequence[Sequence[Tubelet]]) -> list[np.ndarray]:
    """Indices of the detections of each frame that no short tubelet uses."""
    used = [np.zeros(len(fd), dtype=np.bool_) for fd in frames]
    for seg in per_segment:
        for t in seg:
            for frame, d in zip(t.frames, t.det_ids):
                used[frame - 1][d] = True
    return [np.flatnonzero(~u) for u in used]


def _protected_nms(boxes: np.ndarray, scores: np.ndarray, protected: np.ndarray, threshold: float) -> np.ndarray:
    """Greedy NMS in which protected boxes are always kept and only others are suppressed."""
    n = boxes.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    ious = kernels.iou_matrix(boxes, boxes)
    order = np.argsort(-scores, kind="stable")
    keep: list[int] = []
    for i in order:
        if protected[i] or not keep or not (ious[i, keep] > threshold).any():
            keep.append(int(i))
    return np.sort(np.asarray(keep, dtype=np.int64))


def _frame_arrays(items: list[tuple[tuple, float, int]]):
    boxes = np.array([it[0] for it in items], dtype=np.float64).reshape(-1, 4)
    scores = np.array([it[1] for it in items], dtype=np.float64)
    tids = np.array([it[2] for it in items], dtype=np.int64)
    return boxes, scores, tids


def _static(vid: str, frames: Sequence[FrameDetections], classes: Sequence[int], threshold: float) -> list[ScoredBox]:
    out = []
    for fd in frames:
        for c in classes:
            for i in np.sort(frame_nms(fd, c, threshold)):
                out.append(ScoredBox(vid, fd.frame, tuple(map(float, fd.boxes[i])), c, float(fd.scores[i, c])))
    return out


def _seqnms_on(vid: str, frame_ids, boxes_pf, scores_pf, c: int, config: PipelineConfig, tids_pf=None) -> list[ScoredBox]:
    out = []
    res = seq_nms(boxes_pf, scores_pf, config.seqnms_link_iou, config.nms_threshold, config.seqnms_rescore)
    for f, (kept, sc) in enumerate(res):
        for i, s in zip(kept, sc):
            tid = -1 if tids_pf is None else int(tids_pf[f][i])
            out.append(ScoredBox(vid, frame_ids[f], tuple(map(float, boxes_pf[f][i])), c, float(s), tid))
    return out


def _unlinked_frames(frames, per_segment, passthrough, c, threshold):
    """Per-frame (boxes, scores, tubelet ids) of unlinked short tubelets plus raw leftovers, after NMS."""
    items: list[list] = [[] for _ in frames]
    tid = 0
    for seg in per_segment:
        for t in seg:
            for k, frame in enumerate(t.frames):
                items[frame - 1].append((tuple(map(float, t.boxes[k])), float(t.aggregated[c]), tid))
            tid += 1
    for f, idx in enumerate(passthrough):
        for i in idx:
            items[f].append((tuple(map(float, frames[f].boxes[i])), float(frames[f].scores[i, c]), -1))
    out = []
    for f in range(len(frames)):
        boxes, scores, tids = _frame_arrays(items[f])
        keep = np.sort(nms(boxes, scores, threshold))
        out.append((boxes[keep], scores[keep], tids[keep]))
    return out


def process_video(
    vid: str, frames: Sequence[FrameDetections], config: PipelineConfig, method: str, num_classes: int
) -> VideoOutput:
    """Run one method on one video. ``frames`` holds frames 1..N in order."""
    classes = list(range(1, num_classes + 1))
    if method == "static" or (method != "seqnms" and config.segment_length == 1):
        return VideoOutput(_static(vid, frames, classes, config.nms_threshold))
    frame_ids = [fd.frame for fd in frames]
    if method == "seqnms":
        dets = []
        for c in classes:
            dets += _seqnms_on(vid, frame_ids, [fd.boxes for fd in frames], [fd.scores[:, c] for fd in frames], c, config)
        return VideoOutput(dets)

    plan = plan_segments(len(frames), config.segment_length)
    spans = [plan.span(m) for m in range(len(plan))]
    per_segment = build_short_tubelets(frames, plan, config)
    passthrough = _passthrough(frames, per_segment)
    out = VideoOutput([], spans=spans)

    if method in ("tubelets-no-link", "union-seqnms"):
        for c in classes:
            per_frame = _unlinked_frames(frames, per_segment, passthrough, c, config.tnms_threshold)
            if method == "union-seqnms":
                out.detections += _seqnms_on(vid, frame_ids, [p[0] for p in per_frame], [p[1] for p in per_frame], c, config, [p[2] for p in per_frame])
            else:
                for f, (boxes, scores, tids) in enumerate(per_frame):
                    out.detections += [ScoredBox(vid, frame_ids[f], tuple(map(float, b)), c, float(s), int(t)) for b, s, t in zip(boxes, scores, tids)]
        return out

    tid_base = 0
    for c in classes:
        kept = [tubelet_nms(seg, c, config.tnms_threshold) for seg in per_segment]
        out.short_tubelets[c] = [t for seg in kept for t in seg]
        if method == "tubelets-tnms":
            for f, (boxes, scores, tids) in enumerate(_unlinked_frames(frames, kept, passthrough, c, config.tnms_threshold)):
                out.detections += [ScoredBox(vid, frame_ids[f], tuple(map(float, b)), c, float(s), int(t)) for b, s, t in zip(boxes, scores, tids)]
            continue
        long_t = link_short_tubelets(out.short_tubelets[c], c, config.link_threshold)
        out.long_tubelets[c] = long_t
        emitted = emit_frame_detections(long_t)
        for f, fd in enumerate(frames):
            items = [(e.box, float(e.scores[c]), tid_base + e.tubelet_id) for e in emitted.get(fd.frame, [])]
            n_tub = len(items)
            items += [(tuple(map(float, fd.boxes[i])), float(fd.scores[i, c]), -1) for i in passthrough[f]]
            boxes, scores, tids = _frame_arrays(items)
            protected = np.arange(len(items)) < n_tub
            for i in _protected_nms(boxes, scores, protected, config.tnms_threshold):
                out.detections.append(ScoredBox(vid, fd.frame, tuple(map(float, boxes[i])), c, float(scores[i]), int(tids[i])))
        tid_base += len(long_t)
    return out


# ---------------------------------------------------------------------------
# whole corpora


def infer_num_classes(detections: Mapping[str, Sequence[FrameDetections]], config: PipelineConfig) -> int:
    if config.num_classes:
        return config.num_classes
    widths = {fd.num_scores for frames in detections.values() for fd in frames if len(fd)}
    if not widths:
        return 1
    if len(widths) > 1:
        raise ConfigError(f"score vectors of different lengths in one input: {sorted(widths)}")
    return widths.pop() - 1


def _check_frames(vid: str, frames: Sequence[FrameDetections]) -> None:
    for k, fd in enumerate(frames):
        if fd.frame != k + 1:
            raise ValueError(f"video {vid}: frames must run contiguously from 1, frame {k + 1} is missing")


def run_pipeline(
    config: PipelineConfig,
    detections: Mapping[str, Sequence[FrameDetections]],
    tracks: Mapping[str, Sequence[GroundTruthTrack]] | None = None,
    method: str | None = None,
) -> PipelineResult:
    """Process every video (sorted by id) and evaluate if ``tracks`` is given."""
    config.validate()
    method = method or BASELINES[config.baseline]
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    num_classes = infer_num_classes(detections, config)
    vids = sorted(detections)
    for vid in vids:
        _check_frames(vid, detections[vid])

    def work(vid):
        return process_video(vid, detections[vid], config, method, num_classes)

    if config.workers > 1 and len(vids) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(work, vids))
    else:
        outputs = [work(v) for v in vids]

    dets = [d for o in outputs for d in o.detections]
    result = PipelineResult(
        config, method, dets,
        {v: o.long_tubelets for v, o in zip(vids, outputs)},
        {v: o.short_tubelets for v, o in zip(vids, outputs)},
        {v: o.spans for v, o in zip(vids, outputs)},
    )
    if tracks is not None:
        short = None
        if method == "full" and config.segment_length > 1:
            short = {}
            for v, o in zip(vids, outputs):
                for c, ts in o.short_tubelets.items():
                    short.setdefault(c, []).extend((v, t) for t in ts)
        result.report = evaluate(
            dets, tracks, config.match_iou, config.speed_window, config.slow_threshold, config.fast_threshold,
            short_tubelets=short, segment_spans=result.spans if short is not None else None,
        )
    return result


@dataclass
class AblationRow:
    method: str
    map: float | None
    subset_map: dict[str, float | None]


def run_ablation(
    config: PipelineConfig,
    detections: Mapping[str, Sequence[FrameDetections]],
    tracks: Mapping[str, Sequence[GroundTruthTrack]],
    methods: Sequence[str] = METHODS,
) -> list[AblationRow]:
    rows = []
    for m in methods:
        rep = run_pipeline(config, detections, tracks, method=m).report
        rows.append(AblationRow(m, rep.map, dict(rep.subset_map)))
    return rows
