"""Hot numeric kernels.

Every kernel exists twice: a vectorised numpy version (suffix ``_np``) and a
loop version compiled with numba (suffix ``_jit``). The unsuffixed names are
bound to one of the two at import time, see :mod:`tubelink._backend`. Both
versions perform the same floating-point operations in the same order, so their
outputs are bit-identical; ``tests/test_kernels.py`` checks this.

Boxes are float64 arrays of shape ``(n, 4)`` in corner form ``x1, y1, x2, y2``.
Kernels do not validate their inputs.
"""

import numpy as np

from ._backend import USE_JIT, njit

# ---------------------------------------------------------------------------
# pairwise IoU


def iou_matrix_np(a, b):
    ix1 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy1 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix2 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy2 = np.minimum(a[:, None, 3], b[None, :, 3])
    iw = np.maximum(ix2 - ix1, 0.0)
    ih = np.maximum(iy2 - iy1, 0.0)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def pair_iou_py(a, b):
    """IoU of two box tuples in plain Python, same operations as the kernels."""
    iw = max(min(a[2], b[2]) - max(a[0], b[0]), 0.0)
    ih = max(min(a[3], b[3]) - max(a[1], b[1]), 0.0)
    inter = iw * ih
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


@njit
def _pair_iou(ax1, ay1, ax2, ay2, bx1, by1, bx2, by2):
    iw = max(min(ax2, bx2) - max(ax1, bx1), 0.0)
    ih = max(min(ay2, by2) - max(ay1, by1), 0.0)
    inter = iw * ih
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    return inter / (area_a + area_b - inter)


@njit
def iou_matrix_jit(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            out[i, j] = _pair_iou(a[i, 0], a[i, 1], a[i, 2], a[i, 3], b[j, 0], b[j, 1], b[j, 2], b[j, 3])
    return out


# ---------------------------------------------------------------------------
# tubelet overlap: min over frames of the per-frame IoU


def min_iou_matrix_np(stacked):
    """``stacked`` has shape (n_tubelets, n_frames, 4)."""
    n, length = stacked.shape[0], stacked.shape[1]
    if n == 0:
        return np.empty((0, 0), dtype=np.float64)
    out = iou_matrix_np(stacked[:, 0], stacked[:, 0])
    for f in range(1, length):
        out = np.minimum(out, iou_matrix_np(stacked[:, f], stacked[:, f]))
    return out


@njit
def min_iou_matrix_jit(stacked):
    n = stacked.shape[0]
    length = stacked.shape[1]
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(n):
            best = np.inf
            for f in range(length):
                v = _pair_iou(
                    stacked[i, f, 0], stacked[i, f, 1], stacked[i, f, 2], stacked[i, f, 3],
                    stacked[j, f, 0], stacked[j, f, 1], stacked[j, f, 2], stacked[j, f, 3],
                )
                if v < best:
                    best = v
            out[i, j] = best
    return out


# ---------------------------------------------------------------------------
# greedy suppression over a precomputed overlap matrix


def greedy_suppress_np(overlap, order, threshold):
    n = overlap.shape[0]
    suppressed = np.zeros(n, dtype=np.bool_)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= overlap[i] > threshold
    return np.asarray(keep, dtype=np.int64)


@njit
def greedy_suppress_jit(overlap, order, threshold):
    n = overlap.shape[0]
    suppressed = np.zeros(n, dtype=np.bool_)
    keep = np.empty(n, dtype=np.int64)
    k = 0
    for t in range(order.shape[0]):
        i = order[t]
        if suppressed[i]:
            continue
        keep[k] = i
        k += 1
        for j in range(n):
            if overlap[i, j] > threshold:
                suppressed[j] = True
    return keep[:k]


# ---------------------------------------------------------------------------
# greedy one-to-one matching by descending IoU


def greedy_match_np(iou, threshold):
    n, m = iou.shape
    flat = iou.ravel()
    cand = np.flatnonzero(flat >= threshold)
    cand = cand[np.argsort(-flat[cand], kind="mergesort")]
    row_used = np.zeros(n, dtype=np.bool_)
    col_used = np.zeros(m, dtype=np.bool_)
    rows, cols = [], []
    for c in cand:
        i, j = divmod(int(c), m)
        if row_used[i] or col_used[j]:
            continue
        row_used[i] = True
        col_used[j] = True
        rows.append(i)
        cols.append(j)
    return np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)


@njit
def greedy_match_jit(iou, threshold):
    n, m = iou.shape
    flat = iou.ravel()
    cand = np.flatnonzero(flat >= threshold)
    cand = cand[np.argsort(-flat[cand], kind="mergesort")]
    row_used = np.zeros(n, dtype=np.bool_)
    col_used = np.zeros(m, dtype=np.bool_)
    rows = np.empty(min(n, m), dtype=np.int64)
    cols = np.empty(min(n, m), dtype=np.int64)
    k = 0
    for c in cand:
        i = c // m
        j = c % m
        if row_used[i] or col_used[j]:
            continue
        row_used[i] = True
        col_used[j] = True
        rows[k] = i
        cols[k] = j
        k += 1
    return rows[:k], cols[:k]


# ---------------------------------------------------------------------------
# max-score path through a frame-layered link graph (Seq-NMS)
#
# Nodes are numbered frame by frame; frame f owns nodes frame_ptr[f]:frame_ptr[f+1].
# Predecessors of node n are pred_idx[pred_ptr[n]:pred_ptr[n+1]], all in frame f-1.
# Scores must be non-negative so that extending a path never lowers its total.


def best_path_np(scores, frame_ptr, pred_ptr, pred_idx, alive):
    total = scores.shape[0]
    best = np.full(total, -np.inf)
    back = np.full(total, -1, dtype=np.int64)
    for f in range(frame_ptr.shape[0] - 1):
        lo, hi = frame_ptr[f], frame_ptr[f + 1]
        if hi == lo:
            continue
        counts = np.diff(pred_ptr[lo:hi + 1])
        preds = pred_idx[pred_ptr[lo]:pred_ptr[hi]]
        owner = np.repeat(np.arange(hi - lo), counts)
        valid = alive[preds] & alive[lo + owner]
        vals = np.where(valid, best[preds], -np.inf)
        bv = np.full(hi - lo, -np.inf)
        np.maximum.at(bv, owner, vals)
        hit = np.flatnonzero(valid & (vals == bv[owner]))
        first_owner, first_pos = np.unique(owner[hit], return_index=True)
        back[lo + first_owner] = preds[hit[first_pos]]
        has_pred = back[lo:hi] >= 0
        own_alive = alive[lo:hi]
        best[lo:hi] = np.where(has_pred, scores[lo:hi] + bv, np.where(own_alive, scores[lo:hi], -np.inf))
    ends = np.where(back >= 0, best, -np.inf)
    if total == 0 or not np.isfinite(ends.max()):
        return np.empty(0, dtype=np.int64)
    node = int(np.argmax(ends))
    path = [node]
    while back[node] >= 0:
        node = int(back[node])
        path.append(node)
    return np.asarray(path[::-1], dtype=np.int64)


@njit
def best_path_jit(scores, frame_ptr, pred_ptr, pred_idx, alive):
    total = scores.shape[0]
    best = np.full(total, -np.inf)
    back = np.full(total, -1, dtype=np.int64)
    for n in range(total):
        if not alive[n]:
            continue
        bv = -np.inf
        bp = -1
        for k in range(pred_ptr[n], pred_ptr[n + 1]):
            p = pred_idx[k]
            if alive[p] and best[p] > bv:
                bv = best[p]
                bp = p
        if bp >= 0:
            best[n] = scores[n] + bv
            back[n] = bp
        else:
            best[n] = scores[n]
    end = -1
    ev = -np.inf
    for n in range(total):
        if back[n] >= 0 and best[n] > ev:
            ev = best[n]
            end = n
    if end < 0:
        return np.empty(0, dtype=np.int64)
    length = 1
    node = end
    while back[node] >= 0:
        node = back[node]
        length += 1
    path = np.empty(length, dtype=np.int64)
    node = end
    for k in range(length - 1, -1, -1):
        path[k] = node
        node = back[node]
    return path


# ---------------------------------------------------------------------------
# detection-to-ground-truth matching for AP
#
# Detections are visited in ``order``; each claims the unmatched ground-truth
# box of highest IoU (>= threshold) in its image. Result per detection:
# 1 true positive, 0 false positive, -1 matched an ignored ground truth.


def match_detections_np(det_img, det_boxes, order, gt_ptr, gt_boxes, gt_ignore, threshold):
    labels = np.zeros(det_img.shape[0], dtype=np.int8)
    used = np.zeros(gt_boxes.shape[0], dtype=np.bool_)
    for o in order:
        img = det_img[o]
        lo, hi = gt_ptr[img], gt_ptr[img + 1]
        if hi == lo:
            continue
        ious = iou_matrix_np(det_boxes[o:o + 1], gt_boxes[lo:hi])[0]
        ious = np.where(used[lo:hi] | (ious < threshold), -1.0, ious)
        g = int(np.argmax(ious))
        if ious[g] < 0.0:
            continue
        used[lo + g] = True
        labels[o] = -1 if gt_ignore[lo + g] else 1
    return labels


@njit
def match_detections_jit(det_img, det_boxes, order, gt_ptr, gt_boxes, gt_ignore, threshold):
    labels = np.zeros(det_img.shape[0], dtype=np.int8)
    used = np.zeros(gt_boxes.shape[0], dtype=np.bool_)
    for t in range(order.shape[0]):
        o = order[t]
        img = det_img[o]
        best = -1
        bv = -1.0
        for g in range(gt_ptr[img], gt_ptr[img + 1]):
            if used[g]:
                continue
            v = _pair_iou(
                det_boxes[o, 0], det_boxes[o, 1], det_boxes[o, 2], det_boxes[o, 3],
                gt_boxes[g, 0], gt_boxes[g, 1], gt_boxes[g, 2], gt_boxes[g, 3],
            )
            if v >= threshold and v > bv:
                bv = v
                best = g
        if best < 0:
            continue
        used[best] = True
        labels[o] = -1 if gt_ignore[best] else 1
    return labels


if USE_JIT:
    iou_matrix = iou_matrix_jit
    min_iou_matrix = min_iou_matrix_jit
    greedy_suppress = greedy_suppress_jit
    greedy_match = greedy_match_jit
    best_path = best_path_jit
    match_detections = match_detections_jit
else:
    iou_matrix = iou_matrix_np
    min_iou_matrix = min_iou_matrix_np
    greedy_suppress = greedy_suppress_np
    greedy_match = greedy_match_np
    best_path = best_path_np
    match_detections = match_detections_np
