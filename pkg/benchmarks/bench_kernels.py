"""Time the numba kernels against their numpy counterparts, plus one end-to-end run.

    python benchmarks/bench_kernels.py [--repeat N]

Kernels are compared side by side within one process (both variants are
always importable). The pipeline timing uses whichever backend
TUBELINK_DISABLE_JIT selects.
"""

import argparse
import time

import numpy as np

from tubelink import _backend, kernels
from tubelink.baselines import LinkGraph
from tubelink.pipeline import PipelineConfig, run_pipeline
from tubelink.synth import CorpusSpec, degradation_speed_coupling, generate_corpus


def best_of(fn, args, repeat):
    fn(*args)  # compile / warm up
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def boxes(rng, n):
    wh = rng.uniform(10, 60, (n, 2))
    xy = rng.uniform(0, 400, (n, 2))
    return np.ascontiguousarray(np.concatenate([xy, xy + wh], axis=1))


def cases(rng):
    a, b = boxes(rng, 400), boxes(rng, 400)
    overlap = kernels.iou_matrix_np(a, a)
    order = np.argsort(-rng.random(400)).astype(np.int64)
    stacked = np.ascontiguousarray(np.stack([boxes(rng, 200) for _ in range(4)], axis=1))
    graph = LinkGraph.build([boxes(rng, 30) for _ in range(60)], [rng.random(30) for _ in range(60)], 0.1)
    alive = np.ones(graph.n_nodes, dtype=np.bool_)
    n_img, per = 200, 3
    gt = boxes(rng, n_img * per)
    gt_ptr = np.arange(0, n_img * per + 1, per, dtype=np.int64)
    gt_ptr = np.append(gt_ptr, gt_ptr[-1])
    det_img = rng.integers(0, n_img, 3000).astype(np.int64)
    det_boxes = np.ascontiguousarray(gt[det_img * per] + rng.normal(0, 3, (3000, 4)))
    det_order = np.argsort(-rng.random(3000)).astype(np.int64)
    return {
        "iou_matrix 400x400": ("iou_matrix", (a, b)),
        "min_iou_matrix 200 tubes x 4": ("min_iou_matrix", (stacked,)),
        "greedy_suppress 400": ("greedy_suppress", (overlap, order, 0.4)),
        "greedy_match 400x400": ("greedy_match", (kernels.iou_matrix_np(a, b), 0.3)),
        "best_path 60 frames x 30": ("best_path", (graph.scores, graph.frame_ptr, graph.pred_ptr, graph.pred_idx, alive)),
        "match_detections 3000": ("match_detections", (det_img, det_boxes, det_order, gt_ptr, gt, np.zeros(len(gt), np.bool_), 0.5)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--videos", type=int, default=10, help="videos in the end-to-end run")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, (kernel, kargs) in cases(rng).items():
        t_np = best_of(getattr(kernels, kernel + "_np"), kargs, args.repeat)
        t_jit = best_of(getattr(kernels, kernel + "_jit"), kargs, args.repeat)
        print(f"{name:<28}{t_np * 1e3:>12.3f}{t_jit * 1e3:>12.3f}{t_np / t_jit:>10.1f}")

    corpus = generate_corpus(degradation_speed_coupling(CorpusSpec(n_videos=args.videos)))
    for method in ("static", "seqnms", "full"):
        t = time.perf_counter()
        run_pipeline(PipelineConfig(), corpus.detections, corpus.tracks, method=method)
        print(f"pipeline {method} on {args.videos} videos ({_backend.backend_name()}): {time.perf_counter() - t:.2f} s")


if __name__ == "__main__":
    main()
