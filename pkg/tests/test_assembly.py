import numpy as np
import pytest

from tubelink.assembly import Cuboid, assemble_short_tubelets, cuboid_recall, oracle_cuboids, pair_union_proposals
from tubelink.geometry import Box
from tubelink.types import FrameDetections, GroundTruthTrack

from .conftest import random_boxes


def fd(frame, boxes, cls=None):
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.tile([0.2, 0.8], (len(boxes), 1)) if cls is None else np.asarray(cls, dtype=np.float64)
    return FrameDetections(frame, boxes, scores)


def test_stationary_box_one_chain():
    chains = pair_union_proposals([fd(1, [[0, 0, 2, 2]]), fd(2, [[0, 0, 2, 2]])])
    assert len(chains) == 1
    assert chains[0].cuboid == Cuboid(Box(0, 0, 2, 2), (1, 3))


def test_disjoint_boxes_do_not_chain():
    chains = pair_union_proposals([fd(1, [[0, 0, 1, 1]]), fd(2, [[5, 5, 6, 6]])], 0.3)
    assert [c.frames for c in chains] == [(1,), (2,)]
    assert assemble_short_tubelets(chains, (1, 3)) == []


def test_one_third_overlap_chains_with_union_cuboid():
    chains = pair_union_proposals([fd(1, [[0, 0, 1, 1]]), fd(2, [[0.5, 0, 1.5, 1]])], 0.3)
    assert len(chains) == 1
    assert chains[0].cuboid.box == Box(0, 0, 1.5, 1)
    # 1/3 is below 0.34, so no chain there
    assert len(pair_union_proposals([fd(1, [[0, 0, 1, 1]]), fd(2, [[0.5, 0, 1.5, 1]])], 0.34)) == 2


def test_assemble_scores_and_constant_sequence():
    seg = [fd(1, [[0, 0, 2, 2]], [[0.8, 0.2]]), fd(2, [[0, 0, 2, 2]], [[0.2, 0.8]])]
    [t] = assemble_short_tubelets(pair_union_proposals(seg), (1, 3), "mean_max")
    assert t.aggregated[1] == pytest.approx(0.65, abs=1e-15)
    assert assemble_short_tubelets([], (1, 3)) == []
    same = [fd(f, [[0, 0, 2, 2]], [[0.3, 0.7]]) for f in (1, 2, 3)]
    [t] = assemble_short_tubelets(pair_union_proposals(same), (1, 4))
    assert np.allclose(t.aggregated, [0.3, 0.7], rtol=0, atol=1e-15)


def test_matching_is_one_to_one_and_greedy(rng):
    for _ in range(200):
        seg = [fd(f, random_boxes(rng, int(rng.integers(0, 6)), canvas=50, min_side=10)) for f in (1, 2, 3)]
        chains = pair_union_proposals(seg, 0.3)
        used = set()
        for ch in chains:
            for f, d in zip(ch.frames, ch.det_ids):
                assert (f, d) not in used
                used.add((f, d))
        # every detection belongs to exactly one chain
        assert len(used) == sum(len(s) for s in seg)
        for t in assemble_short_tubelets(chains, (1, 4)):
            assert t.span == (1, 4)


def test_segment_must_be_consecutive():
    with pytest.raises(ValueError):
        pair_union_proposals([fd(1, [[0, 0, 1, 1]]), fd(3, [[0, 0, 1, 1]])])


def test_exact_detections_reproduce_tracks(rng):
    boxes = np.array([[10, 10, 30, 30], [40, 40, 70, 60]], dtype=float)
    vel = np.array([[3, 1, 3, 1], [-2, 2, -2, 2]], dtype=float)
    seg = [fd(f, boxes + vel * f) for f in (1, 2, 3)]
    ts = assemble_short_tubelets(pair_union_proposals(seg), (1, 4))
    assert len(ts) == 2
    got = sorted(t.boxes.tolist() for t in ts)
    assert got == sorted([[list(boxes[i] + vel[i] * f) for f in (1, 2, 3)] for i in range(2)])


def test_oracle_cuboids():
    still = GroundTruthTrack(0, 1, 1, [[0, 0, 1, 1]] * 3)
    moving = GroundTruthTrack(1, 1, 1, [[0, 0, 1, 1], [2, 0, 3, 1], [4, 0, 5, 1]])
    assert oracle_cuboids([still], (1, 3)) == [Cuboid(Box(0, 0, 1, 1), (1, 3))]
    assert oracle_cuboids([moving], (1, 3)) == [Cuboid(Box(0, 0, 3, 1), (1, 3))]
    late = GroundTruthTrack(2, 1, 2, [[0, 0, 1, 1]] * 2)
    assert oracle_cuboids([late], (1, 3)) == []
    a = oracle_cuboids([still, moving], (1, 4), 0.1, 0.1, seed=5)
    b = oracle_cuboids([still, moving], (1, 4), 0.1, 0.1, seed=5)
    assert a == b and a != oracle_cuboids([still, moving], (1, 4))
    with pytest.raises(ValueError):
        oracle_cuboids([still], (1, 3), -0.1)


def test_cuboid_recall_with_small_jitter(rng):
    tracks = []
    for k in range(30):
        b = random_boxes(rng, 1, canvas=500, min_side=30, max_side=80)[0]
        v = rng.normal(0, 4, 2)
        tracks.append(GroundTruthTrack(k, 1, 1, [b + np.r_[v, v] * f for f in range(4)]))
    # 5% scale and shift noise keeps every cuboid above IoU 0.5 with its target
    for seed in range(5):
        props = oracle_cuboids(tracks, (1, 5), 0.05, 0.05, seed=seed)
        assert cuboid_recall(props, tracks, (1, 5)) == 1.0
    assert cuboid_recall([], tracks, (1, 5)) == 0.0
