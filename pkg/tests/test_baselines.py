import itertools

import numpy as np
import pytest

from tubelink.baselines import LinkGraph, frame_nms, nms, seq_nms, seq_nms_link
from tubelink.tubelet import Tubelet, tubelet_nms
from tubelink.types import FrameDetections

from .conftest import random_boxes, ref_iou


def _fd(frame, boxes, class_scores):
    s = np.asarray(class_scores, dtype=np.float64)
    return FrameDetections(frame, np.asarray(boxes, dtype=np.float64).reshape(-1, 4), np.stack([1 - s, s], axis=1))


def brute_force_nms(boxes, scores, threshold):
    """Keep a box iff no kept box ranked before it overlaps it above ``threshold``."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    kept = []
    for i in order:
        if all(ref_iou(boxes[i], boxes[j]) <= threshold for j in kept):
            kept.append(i)
    return kept


def test_frame_nms_examples():
    assert frame_nms(_fd(1, np.zeros((0, 4)), []), 1).tolist() == []
    fd = _fd(1, [[0, 0, 10, 10], [0, 0, 10, 10]], [0.6, 0.9])
    assert frame_nms(fd, 1, 0.5).tolist() == [1]
    with pytest.raises(ValueError):
        frame_nms(fd, 1, 1.0)


def test_nms_matches_brute_force(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 11))
        boxes = random_boxes(rng, n, canvas=60)
        scores = rng.integers(0, 8, n) / 8.0  # coarse scores force ties
        th = float(rng.choice([0.3, 0.4, 0.5, 0.7]))
        assert nms(boxes, scores, th).tolist() == brute_force_nms(boxes, scores, th)


def test_frame_nms_equals_single_frame_tnms(rng):
    for _ in range(300):
        n = int(rng.integers(1, 11))
        boxes = random_boxes(rng, n, canvas=60)
        scores = rng.dirichlet(np.ones(3), n)
        fd = FrameDetections(3, boxes, scores)
        tubes = [Tubelet(3, boxes[i:i + 1], scores[i:i + 1]) for i in range(n)]
        kept = tubelet_nms(tubes, 2, 0.4)
        assert [tubes.index(t) for t in kept] == frame_nms(fd, 2, 0.4).tolist()


def test_seq_nms_single_track_average():
    box = [0, 0, 10, 10]
    video = [_fd(f, [box], [s]) for f, s in enumerate([0.9, 0.1, 0.1, 0.1, 0.1], start=1)]
    out = seq_nms_link(video, 1, rescore="avg")
    assert [k.tolist() for k, _ in out] == [[0]] * 5
    assert all(s.tolist() == pytest.approx([0.26], abs=1e-15) for _, s in out)
    out = seq_nms_link(video, 1, rescore="max")
    assert all(s.tolist() == [0.9] for _, s in out)


def test_seq_nms_disjoint_is_identity():
    video = [_fd(f, [[20 * f, 0, 20 * f + 10, 10], [20 * f, 50, 20 * f + 10, 60]], [0.7, 0.2]) for f in range(1, 5)]
    out = seq_nms_link(video, 1)
    assert [k.tolist() for k, _ in out] == [[0, 1]] * 4
    assert [s.tolist() for _, s in out] == [[0.7, 0.2]] * 4


def test_seq_nms_rejects_bad_arguments():
    with pytest.raises(ValueError):
        seq_nms([np.zeros((1, 4))], [np.ones(1)], link_iou=0.0)
    with pytest.raises(ValueError):
        seq_nms([np.zeros((1, 4))], [np.ones(1)], rescore="median")


def all_paths(graph: LinkGraph, alive):
    """Every frame-consecutive path with at least one edge through alive nodes."""
    succ = {}
    for p, n in graph.edges():
        succ.setdefault(p, []).append(n)

    def extend(path):
        yield path
        for n in succ.get(path[-1], []):
            if alive[n]:
                yield from extend(path + [n])

    for s in range(graph.n_nodes):
        if alive[s]:
            for path in extend([s]):
                if len(path) >= 2:
                    yield path


def _random_lattice(rng, max_frames=4, max_boxes=4, dyadic=True):
    n_frames = int(rng.integers(1, max_frames + 1))
    base = random_boxes(rng, max_boxes, canvas=40, min_side=10, max_side=25)
    boxes, scores = [], []
    for _ in range(n_frames):
        k = int(rng.integers(0, max_boxes + 1))
        b = base[rng.integers(0, max_boxes, k)] + rng.normal(0, 3, (k, 4))
        b[:, 2:] = np.maximum(b[:, 2:], b[:, :2] + 1)
        boxes.append(b)
        scores.append(rng.integers(0, 65, k) / 64.0 if dyadic else rng.random(k))
    return boxes, scores


def test_best_path_matches_exhaustive_enumeration():
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(3000):
        boxes, scores = _random_lattice(rng)
        g = LinkGraph.build(boxes, scores, 0.5)
        alive = rng.random(g.n_nodes) < 0.85
        paths = list(all_paths(g, alive))
        got = g.best_path(alive)
        if not paths:
            assert got.size == 0
            continue
        checked += 1
        assert all(alive[got]) and len(got) >= 2
        edges = set(g.edges())
        assert all((int(a), int(b)) in edges for a, b in zip(got, got[1:]))
        assert g.scores[got].sum() == max(sum(g.scores[p]) for p in paths)
    assert checked > 800  # 933 non-trivial lattices with this seed


def test_lattice_three_frames_two_boxes():
    a, b = [0, 0, 10, 10], [30, 30, 40, 40]
    boxes = [np.array([a, b])] * 3
    scores = [np.array([0.5, 0.25]), np.array([0.125, 0.75]), np.array([0.5, 0.5])]
    g = LinkGraph.build(boxes, scores, 0.5)
    paths = list(all_paths(g, np.ones(6, bool)))
    assert sorted(map(tuple, paths)) == sorted([(0, 2), (2, 4), (0, 2, 4), (1, 3), (3, 5), (1, 3, 5)])
    assert g.best_path().tolist() == [1, 3, 5]


def brute_force_seq_nms(boxes, scores, link_iou, nms_threshold):
    g = LinkGraph.build(boxes, scores, link_iou)
    alive = np.ones(g.n_nodes, bool)
    on_path = np.zeros(g.n_nodes, bool)
    new = g.scores.copy()
    while True:
        paths = list(all_paths(g, alive))
        if not paths:
            break
        best = max(paths, key=lambda p: sum(g.scores[p]))
        new[best] = np.mean(g.scores[best])
        alive[best] = False
        on_path[best] = True
        for node in best:
            f = g.frame_of(node)
            for m in range(g.frame_ptr[f], g.frame_ptr[f + 1]):
                if ref_iou(g.boxes[node], g.boxes[m]) > nms_threshold:
                    alive[m] = False
    out = []
    for f in range(len(boxes)):
        lo, hi = g.frame_ptr[f], g.frame_ptr[f + 1]
        rest = [i for i in range(hi - lo) if alive[lo + i]]
        kept = [rest[i] for i in brute_force_nms(g.boxes[lo:hi][rest], g.scores[lo:hi][rest], nms_threshold)]
        kept = sorted(kept + [i for i in range(hi - lo) if on_path[lo + i]])
        out.append((kept, new[lo:hi][kept]))
    return out


def test_seq_nms_matches_brute_force():
    rng = np.random.default_rng(6)
    for _ in range(500):
        boxes, scores = _random_lattice(rng, max_frames=5, dyadic=False)
        got = seq_nms(boxes, scores, 0.5, 0.4)
        ref = brute_force_seq_nms(boxes, scores, 0.5, 0.4)
        assert [k.tolist() for k, _ in got] == [k for k, _ in ref]
        for (_, s), (_, r) in zip(got, ref):
            assert np.allclose(s, r, rtol=0, atol=1e-12)


def test_rescoring_keeps_geometry(rng):
    for _ in range(100):
        boxes, scores = _random_lattice(rng, max_frames=6, max_boxes=5, dyadic=False)
        video = [_fd(f + 1, b, s) for f, (b, s) in enumerate(zip(boxes, scores))]
        for fd, (kept, new) in zip(video, seq_nms_link(video, 1)):
            assert set(kept.tolist()) <= set(range(len(fd)))
            assert new.shape == kept.shape
            assert np.all((new >= 0) & (new <= 1))
