"""Acceptance checks on the seed-42 corpus and the oracle suites.

Each test records one PASS/FAIL line, printed in the pytest terminal summary.
"""

from __future__ import annotations

import numpy as np
import pytest

from tubelink.baselines import LinkGraph
from tubelink.cli import main
from tubelink.evaluation import compute_ap
from tubelink.geometry import bounding_box, iou
from tubelink.linking import link_short_tubelets
from tubelink.pipeline import PipelineConfig, run_ablation, run_pipeline
from tubelink.synth import CorpusSpec, degradation_speed_coupling, generate_corpus
from tubelink.tubelet import tubelet_nms
from tubelink.types import ScoredBox

from .test_baselines import _random_lattice, all_paths
from .test_geometry import _pairs, raster_iou
from .test_linking import _as_tuple, _random_layout, _ref_tuple, brute_force_link
from .test_tubelet import _random_instance, brute_force_tnms

RESULTS: list[str] = []

# full minus static mAP on the seed-42 corpus, in points; regression-tested to +-0.5
PINNED_MARGIN = 12.94


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(degradation_speed_coupling(CorpusSpec(seed=42)))


@pytest.fixture(scope="module")
def ablation(corpus):
    return {r.method: r for r in run_ablation(PipelineConfig(), corpus.detections, corpus.tracks)}


def test_tnms_oracle():
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(1000):
        ts = _random_instance(rng)
        th = float(rng.choice([0.2, 0.4, 0.6]))
        kept = {id(t) for t in tubelet_nms(ts, 1, th)}
        bad += kept != {id(ts[i]) for i in brute_force_tnms(ts, 1, th)}
    record("T-NMS oracle", bad == 0, f"{1000 - bad}/1000 instances equal the brute-force keep set")


def test_linking_oracle():
    rng = np.random.default_rng(21)
    bad = 0
    for _ in range(1000):
        ts = _random_layout(rng, max_tubelets=8)
        th = float(rng.choice([0.3, 0.4, 0.5]))
        bad += [_as_tuple(t) for t in link_short_tubelets(ts, 1, th)] != [_ref_tuple(e) for e in brute_force_link(ts, 1, th)]
    record("linking oracle", bad == 0, f"{1000 - bad}/1000 instances equal the brute-force greedy linking")


def test_seqnms_path_optimality():
    rng = np.random.default_rng(5)
    bad = n = 0
    for _ in range(3000):
        boxes, scores = _random_lattice(rng)
        g = LinkGraph.build(boxes, scores, 0.5)
        alive = np.ones(g.n_nodes, bool)
        paths = list(all_paths(g, alive))
        got = g.best_path(alive)
        if not paths:
            bad += got.size != 0
            continue
        n += 1
        bad += g.scores[got].sum() != max(sum(g.scores[p]) for p in paths)
    record("Seq-NMS path optimality", bad == 0, f"{n - bad}/{n} lattices (<=4 frames x <=4 boxes) match exhaustive enumeration")


def test_geometry():
    rng = np.random.default_rng(7)
    a, b = _pairs(rng, 10_000)
    err = float(np.max(np.abs(np.array([iou(a[i], b[i]) for i in range(len(a))]) - raster_iou(a, b))))
    contained = True
    for _ in range(2000):
        boxes = rng.uniform(0, 100, (int(rng.integers(1, 8)), 2, 2))
        boxes = np.concatenate([boxes.min(1), boxes.max(1) + 1e-3], axis=1)
        u = bounding_box(boxes)
        u = np.array([u.x1, u.y1, u.x2, u.y2])
        contained &= bool(np.all(u[:2] <= boxes[:, :2]) and np.all(u[2:] >= boxes[:, 2:]))
    record("geometry", err <= 2e-3 and contained, f"max |iou - raster| = {err:.2e} (<= 2e-3), bounding_box containment {'holds' if contained else 'violated'}")


def test_ap_correctness():
    A, B, FAR = (0, 0, 10, 10), (50, 50, 60, 60), (80, 0, 90, 10)
    d = lambda box, s: ScoredBox("v", 1, tuple(map(float, box)), 1, s)
    one = {("v", 1): np.array([A], float)}
    two = {("v", 1): np.array([A, B], float)}
    cases = [
        (compute_ap([d(A, 0.3)], one).ap, 1.0),
        (compute_ap([d(A, 0.2), d(B, 0.9)], two).ap, 1.0),
        (compute_ap([], one).ap, 0.0),
        (compute_ap([d(A, 0.9), d(FAR, 0.95)], one).ap, 0.5),
        (compute_ap([d(A, 0.9), d(FAR, 0.8), d(B, 0.7)], two).ap, 0.5 + 0.5 * (2 / 3)),
    ]
    ok = all(got == want for got, want in cases)
    record("AP correctness", ok, "perfect 1.0, empty 0.0, hand-enumerated cases " + ", ".join(f"{g:.4f}" for g, _ in cases[3:]))


def test_table_ordering(ablation):
    full, tnms, static = (ablation[m].map * 100 for m in ("full", "tubelets-tnms", "static"))
    margin = full - static
    ok = full > tnms > static and margin >= 3 and abs(margin - PINNED_MARGIN) <= 0.5
    record("ordering full > T-NMS only > static", ok,
           f"{full:.2f} > {tnms:.2f} > {static:.2f}; margin {margin:.2f} (>= 3, pinned {PINNED_MARGIN} +- 0.5)")


def test_speed_split(ablation):
    gain = {s: (ablation["full"].subset_map[s] - ablation["static"].subset_map[s]) * 100 for s in ("slow", "fast")}
    record("speed split", gain["fast"] > gain["slow"], f"fast gain {gain['fast']:.2f} > slow gain {gain['slow']:.2f}")


def test_same_frame_vs_neighbor_frame(ablation):
    full, seq = ablation["full"], ablation["seqnms"]
    ok = full.map >= seq.map and full.subset_map["fast"] > seq.subset_map["fast"]
    record("same-frame vs neighbour-frame linking", ok,
           f"mAP {full.map * 100:.2f} >= {seq.map * 100:.2f}; fast {full.subset_map['fast'] * 100:.2f} > {seq.subset_map['fast'] * 100:.2f}")


def test_strict_criterion(corpus, ablation):
    rep = run_pipeline(PipelineConfig(segment_length=2), corpus.detections, corpus.tracks).report
    loose, strict = rep.loose_tubelet_map * 100, rep.strict_tubelet_map * 100
    ok = strict <= loose and loose - strict <= 5
    # box-level mAP of the same short tubelets and of the linked output, for reference only
    boxes_short, boxes_full = ablation["tubelets-tnms"].map * 100, ablation["full"].map * 100
    record("strict criterion", ok,
           f"strict {strict:.2f} <= loose {loose:.2f} (tubelet level, K=2), gap {loose - strict:.2f} (<= 5); "
           f"box-level mAP {boxes_short:.2f} unlinked, {boxes_full:.2f} linked")


def test_boundary_issue(ablation):
    part = generate_corpus(degradation_speed_coupling(CorpusSpec(seed=42, partial_lifetimes=True)))
    p_full = run_pipeline(PipelineConfig(), part.detections, part.tracks).report.map * 100
    p_static = run_pipeline(PipelineConfig(), part.detections, part.tracks, method="static").report.map * 100
    f_full, f_static = ablation["full"].map * 100, ablation["static"].map * 100
    gain_drop = (f_full - f_static) - (p_full - p_static)
    abs_drop = f_full - p_full
    ok = gain_drop < 2 and abs_drop < 2
    record("boundary issue", ok,
           f"gain drop {gain_drop:.2f}, full-pipeline mAP drop {abs_drop:.2f} with mid-video track boundaries (both < 2)")


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_determinism(tmp_path):
    cfg = tmp_path / "acceptance.txt"
    cfg.write_text("seed = 42\n")
    corpus_dir = tmp_path / "corpus"
    assert main(["synth", "--config", str(cfg), "--out-dir", str(corpus_dir)]) == 0
    det, gt = str(corpus_dir / "detections.jsonl"), str(corpus_dir / "ground_truth.jsonl")
    trees = []
    for w in ("1", "8"):
        out = tmp_path / f"w{w}"
        codes = [
            main(["synth", "--config", str(cfg), "--workers", w, "--out-dir", str(out / "synth")]),
            main(["run", "--config", str(cfg), "--detections", det, "--gt", gt, "--workers", w, "--out-dir", str(out / "run")]),
            main(["ablate", "--config", str(cfg), "--workers", w, "--out-dir", str(out / "ablate")]),
            main(["eval", "--config", str(cfg), "--detections", str(out / "run" / "detections.jsonl"), "--gt", gt, "--workers", w, "--out-dir", str(out / "eval")]),
        ]
        assert codes == [0, 0, 0, 0]
        trees.append(_tree(out))
    same = trees[0] == trees[1]
    record("determinism", same, f"{len(trees[0])} output files of synth/run/ablate/eval byte-identical with 1 and 8 workers")
