"""Reference methods: per-frame NMS and Seq-NMS style neighbour-frame linking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .types import FrameDetections

RESCORE_MODES = ("avg", "max")


def nms(boxes: np.ndarray, scores: np.ndarray, threshold: float = 0.4) -> np.ndarray:
    """Greedy NMS; returns kept indices in keep order (ties: lower index first)."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    if boxes.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable").astype(np.int64)
    return kernels.greedy_suppress(kernels.iou_matrix(boxes, boxes), order, float(threshold))


def frame_nms(detections: FrameDetections, class_id: int, threshold: float = 0.4) -> np.ndarray:
    """Per-class NMS of one frame by descending ``class_id`` score."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    if len(detections) == 0:
        return np.empty(0, dtype=np.int64)
    return nms(detections.boxes, detections.scores[:, class_id], threshold)


@dataclass(frozen=True, eq=False)
class LinkGraph:
    """Detections of consecutive frames joined where their IoU reaches ``link_iou``.

    Nodes are numbered frame by frame: frame ``f`` owns
    ``frame_ptr[f]:frame_ptr[f+1]``. ``pred_idx[pred_ptr[n]:pred_ptr[n+1]]``
    lists the predecessors of node ``n`` in frame ``f - 1``.
    """

    boxes: np.ndarray
    scores: np.ndarray
    frame_ptr: np.ndarray
    pred_ptr: np.ndarray
    pred_idx: np.ndarray

    @classmethod
    def build(cls, boxes_per_frame: Sequence[np.ndarray], scores_per_frame: Sequence[np.ndarray], link_iou: float) -> "LinkGraph":
        boxes_per_frame = [np.asarray(b, dtype=np.float64).reshape(-1, 4) for b in boxes_per_frame]
        counts = np.array([b.shape[0] for b in boxes_per_frame], dtype=np.int64)
        frame_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        boxes = np.concatenate(boxes_per_frame) if boxes_per_frame else np.zeros((0, 4))
        scores = np.concatenate([np.asarray(s, dtype=np.float64).ravel() for s in scores_per_frame]) if scores_per_frame else np.zeros(0)
        if scores.shape[0] != boxes.shape[0]:
            raise ValueError("one score per box is required")
        if scores.size and scores.min() < 0:
            raise ValueError("link scores must be non-negative")
        preds: list[np.ndarray] = []
        pred_counts = np.zeros(boxes.shape[0], dtype=np.int64)
        for f in range(1, len(boxes_per_frame)):
            a, b = boxes_per_frame[f - 1], boxes_per_frame[f]
            if a.shape[0] == 0 or b.shape[0] == 0:
                preds.extend(np.empty(0, dtype=np.int64) for _ in range(b.shape[0]))
                continue
            linked = kernels.iou_matrix(b, a) >= link_iou
            for j in range(b.shape[0]):
                p = np.flatnonzero(linked[j]) + frame_ptr[f - 1]
                preds.append(p)
                pred_counts[frame_ptr[f] + j] = p.shape[0]
        if len(boxes_per_frame):
            preds = [np.empty(0, dtype=np.int64)] * int(counts[0]) + preds
        pred_ptr = np.concatenate([[0], np.cumsum(pred_counts)]).astype(np.int64)
        pred_idx = np.concatenate(preds).astype(np.int64) if preds else np.empty(0, dtype=np.int64)
        return cls(boxes, scores, frame_ptr, pred_ptr, pred_idx)

    @property
    def n_nodes(self) -> int:
        return self.boxes.shape[0]

    def frame_of(self, node: int) -> int:
        return int(np.searchsorted(self.frame_ptr, node, side="right") - 1)

    def edges(self) -> list[tuple[int, int]]:
        return [(int(p), n) for n in range(self.n_nodes) for p in self.pred_idx[self.pred_ptr[n]:self.pred_ptr[n + 1]]]

    def best_path(self, alive: np.ndarray | None = None) -> np.ndarray:
        """Highest-total-score path with at least one edge through alive nodes."""
        if alive is None:
            alive = np.ones(self.n_nodes, dtype=np.bool_)
        return kernels.best_path(self.scores, self.frame_ptr, self.pred_ptr, self.pred_idx, alive)


def seq_nms(
    boxes_per_frame: Sequence[np.ndarray],
    scores_per_frame: Sequence[np.ndarray],
    link_iou: float = 0.5,
    nms_threshold: float = 0.4,
    rescore: str = "avg",
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seq-NMS on single-class scores.

    Repeatedly takes the best path, rescores its boxes with the path average
    (or max), and in each frame suppresses boxes overlapping the path box by
    more than ``nms_threshold``. Boxes never on a path keep their score and go
    through per-frame NMS. Returns ``(kept indices, scores)`` per frame.
    """
    if rescore not in RESCORE_MODES:
        raise ValueError(f"rescore must be one of {RESCORE_MODES}, got {rescore!r}")
    if not 0.0 < link_iou < 1.0:
        raise ValueError(f"link_iou must lie in (0, 1), got {link_iou}")
    graph = LinkGraph.build(boxes_per_frame, scores_per_frame, link_iou)
    n = graph.n_nodes
    alive = np.ones(n, dtype=np.bool_)
    on_path = np.zeros(n, dtype=np.bool_)
    new_scores = graph.scores.copy()
    while True:
        path = graph.best_path(alive)
        if path.shape[0] < 2:
            break
        vals = graph.scores[path]
        new_scores[path] = vals.mean() if rescore == "avg" else vals.max()
        on_path[path] = True
        alive[path] = False
        for node in path:
            f = graph.frame_of(int(node))
            lo, hi = graph.frame_ptr[f], graph.frame_ptr[f + 1]
            over = kernels.iou_matrix(graph.boxes[node:node + 1], graph.boxes[lo:hi])[0] > nms_threshold
            alive[lo:hi] &= ~over

    out = []
    for f in range(len(graph.frame_ptr) - 1):
        lo, hi = int(graph.frame_ptr[f]), int(graph.frame_ptr[f + 1])
        rest = np.flatnonzero(alive[lo:hi])
        survivors = rest[nms(graph.boxes[lo + rest], graph.scores[lo + rest], nms_threshold)] if rest.size else rest
        kept = np.sort(np.concatenate([np.flatnonzero(on_path[lo:hi]), survivors])).astype(np.int64)
        out.append((kept, new_scores[lo + kept]))
    return out


def seq_nms_link(
    video: Sequence[FrameDetections],
    class_id: int,
    link_iou: float = 0.5,
    nms_threshold: float = 0.4,
    rescore: str = "avg",
) -> list[tuple[np.ndarray, np.ndarray]]:
    """:func:`seq_nms` on the ``class_id`` column of a video's detections."""
    return seq_nms(
        [fd.boxes for fd in video],
        [fd.scores[:, class_id] for fd in video],
        link_iou=link_iou,
        nms_threshold=nms_threshold,
        rescore=rescore,
    )
