"""Command line entry point: ``tubelink {synth,run,ablate,eval}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io
from .evaluation import evaluate
from .pipeline import BASELINES, PipelineConfig, run_ablation, run_pipeline
from .synth import CorpusSpec, degradation_speed_coupling, generate_corpus
from .tubelet import AGGREGATION_MODES

_FLAG_FIELDS = {
    "segment_len": "segment_length",
    "tnms_thresh": "tnms_threshold",
    "link_thresh": "link_threshold",
    "agg": "aggregation",
    "baseline": "baseline",
    "seed": "seed",
    "workers": "workers",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    p.add_argument("--segment-len", type=int, help="segment length K (1 = per-frame NMS)")
    p.add_argument("--tnms-thresh", type=float, help="tubelet NMS threshold")
    p.add_argument("--link-thresh", type=float, help="linking IoU threshold")
    p.add_argument("--agg", choices=AGGREGATION_MODES, help="score aggregation")
    p.add_argument("--baseline", choices=sorted(BASELINES), help="method to run instead of the full pipeline")
    p.add_argument("--seed", type=int, help="corpus seed")
    p.add_argument("--workers", type=int, help="videos processed concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tubelink", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _common(p)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--speed-coupling", type=float, help="override corpus.speed_coupling")

    p = sub.add_parser("run", help="rescore detections")
    _common(p)
    p.add_argument("--detections", type=Path, required=True)
    p.add_argument("--gt", type=Path, help="ground-truth JSONL; enables evaluation")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("ablate", help="compare all methods on one corpus")
    _common(p)
    p.add_argument("--detections", type=Path, help="detections JSONL (default: synthesize)")
    p.add_argument("--gt", type=Path, help="ground-truth JSONL (required with --detections)")
    p.add_argument("--speed-coupling", type=float, help="override corpus.speed_coupling when synthesizing")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("eval", help="score existing output detections")
    _common(p)
    p.add_argument("--detections", type=Path, required=True, help="labelled detections JSONL")
    p.add_argument("--gt", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    return parser


def resolve(args: argparse.Namespace) -> tuple[PipelineConfig, CorpusSpec]:
    pipe, corpus = io.read_config(args.config) if args.config else ({}, {})
    for flag, name in _FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            pipe[name] = v
    config = PipelineConfig(**pipe)
    config.validate()
    corpus.setdefault("seed", config.seed)
    if getattr(args, "seed", None) is not None:
        corpus["seed"] = args.seed
    if getattr(args, "speed_coupling", None) is not None:
        corpus["speed_coupling"] = args.speed_coupling
    spec = CorpusSpec(**corpus)
    spec.validate()
    return config, spec


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _echo(config: PipelineConfig, spec: CorpusSpec | None) -> dict:
    # worker count changes scheduling only; leaving it out keeps reports byte-identical across it
    out = {"pipeline": {k: v for k, v in config.to_dict().items() if k != "workers"}}
    if spec is not None:
        out["corpus"] = {k: list(v) if isinstance(v, tuple) else v for k, v in spec.__dict__.items()}
    return out


def _synthesize(spec: CorpusSpec):
    return generate_corpus(degradation_speed_coupling(spec))


def cmd_synth(args, config, spec) -> None:
    corpus = _synthesize(spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "detections.jsonl", "w", encoding="utf-8") as fh:
        io.write_detections(fh, corpus.detections)
    with open(args.out_dir / "ground_truth.jsonl", "w", encoding="utf-8") as fh:
        io.write_ground_truth(fh, corpus.tracks)
    _write(args.out_dir / "config.txt", io.dump_config(config, spec))


def _finish_eval(out_dir: Path, report, payload: dict) -> None:
    payload["report"] = report.to_dict()
    with open(out_dir / "pr_curves.tsv", "w", encoding="utf-8") as fh:
        io.write_pr_curves(fh, report.pr_curves)


def cmd_run(args, config, spec) -> None:
    dets = io.read_detections(args.detections, config.num_classes)
    tracks = io.read_ground_truth(args.gt) if args.gt else None
    result = run_pipeline(config, dets, tracks)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "detections.jsonl", "w", encoding="utf-8") as fh:
        io.write_scored(fh, result.detections)
    with open(args.out_dir / "tubelets.jsonl", "w", encoding="utf-8") as fh:
        io.write_tubelets(fh, result.long_tubelets)
    payload = {"config": _echo(config, None), "method": result.method, "n_detections": len(result.detections)}
    if result.report is not None:
        _finish_eval(args.out_dir, result.report, payload)
    _write(args.out_dir / "report.json", io.report_json(payload))


def cmd_ablate(args, config, spec) -> None:
    if args.detections is not None:
        if args.gt is None:
            raise ValueError("--gt is required with --detections")
        dets, tracks, used_spec = io.read_detections(args.detections, config.num_classes), io.read_ground_truth(args.gt), None
    else:
        corpus = _synthesize(spec)
        dets, tracks, used_spec = corpus.detections, corpus.tracks, corpus.spec
    rows = run_ablation(config, dets, tracks)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    _write(args.out_dir / "ablation.tsv", io.ablation_tsv(rows))
    payload = {
        "config": _echo(config, used_spec),
        "methods": {r.method: {"map": r.map, "subset_map": r.subset_map} for r in rows},
    }
    _write(args.out_dir / "report.json", io.report_json(payload))


def cmd_eval(args, config, spec) -> None:
    dets = io.read_scored(args.detections)
    tracks = io.read_ground_truth(args.gt)
    report = evaluate(dets, tracks, config.match_iou, config.speed_window, config.slow_threshold, config.fast_threshold)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"config": _echo(config, None), "n_detections": len(dets)}
    _finish_eval(args.out_dir, report, payload)
    _write(args.out_dir / "report.json", io.report_json(payload))


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "ablate": cmd_ablate, "eval": cmd_eval}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, spec = resolve(args)
        COMMANDS[args.command](args, config, spec)
    except (ValueError, TypeError, OSError) as exc:
        print(f"tubelink {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
