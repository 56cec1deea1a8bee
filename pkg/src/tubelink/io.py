"""Wire formats: detection and ground-truth JSON lines, config files, reports and tables.

Detection record, one JSON object per line::

    {"video_id": "v1", "frame": 1, "bbox": [x1, y1, x2, y2], "scores": [bg, c1, ...]}

``bbox_cxcywh`` may replace ``bbox``; ``"label": c, "score": s`` may replace
``scores``. An optional ``gt_track_id`` is carried along. A record holding only
``video_id`` and ``n_frames`` declares the video length so that frames without
detections are allowed.
"""

from __future__ import annotations

import json
import math
from dataclasses import fields
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .geometry import InvalidBoxError, center_to_corner, validate_box_array
from .pipeline import AblationRow, PipelineConfig
from .synth import CorpusSpec
from .tubelet import Tubelet
from .types import FrameDetections, GroundTruthTrack, ScoredBox


class FormatError(ValueError):
    """A malformed input line or file."""

    def __init__(self, source: str, line: int, message: str):
        super().__init__(f"{source}:{line}: {message}")
        self.source = source
        self.line = line


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "), allow_nan=False)


def _records(path: str | Path) -> Iterable[tuple[int, dict]]:
    source = str(path)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(source, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise FormatError(source, lineno, "record must be a JSON object")
            yield lineno, rec


def _field(rec: dict, key: str, kind, source: str, lineno: int):
    if key not in rec:
        raise FormatError(source, lineno, f"missing field {key!r}")
    val = rec[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise FormatError(source, lineno, f"{key} must be an integer")
    if kind is str and not isinstance(val, str):
        raise FormatError(source, lineno, f"{key} must be a string")
    return val


def _numbers(val, n: int | None, key: str, source: str, lineno: int) -> list[float]:
    if not isinstance(val, list) or (n is not None and len(val) != n):
        raise FormatError(source, lineno, f"{key} must be a list of {n if n else 'some'} numbers")
    out = []
    for v in val:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise FormatError(source, lineno, f"{key} must hold finite numbers")
        out.append(float(v))
    return out


def _bbox(rec: dict, source: str, lineno: int) -> list[float]:
    if "bbox" in rec:
        box = _numbers(rec["bbox"], 4, "bbox", source, lineno)
    elif "bbox_cxcywh" in rec:
        box = list(map(float, center_to_corner(np.array([_numbers(rec["bbox_cxcywh"], 4, "bbox_cxcywh", source, lineno)]))[0]))
    else:
        raise FormatError(source, lineno, "missing field 'bbox'")
    try:
        validate_box_array(np.array([box]))
    except InvalidBoxError as exc:
        raise FormatError(source, lineno, str(exc)) from None
    return box


def read_detections(path: str | Path, num_classes: int = 0) -> dict[str, list[FrameDetections]]:
    """Read detection records into contiguous per-video frame lists.

    ``label``/``score`` records become a vector with ``score`` at ``label`` and
    zeros elsewhere; its length is ``num_classes + 1``, or the widest vector
    or largest label seen when ``num_classes`` is 0.
    """
    source = str(path)
    rows: dict[str, dict[int, list]] = {}
    declared: dict[str, int] = {}
    widths: set[int] = set()
    max_label = 0
    for lineno, rec in _records(path):
        vid = _field(rec, "video_id", str, source, lineno)
        if "n_frames" in rec and "frame" not in rec:
            n = _field(rec, "n_frames", int, source, lineno)
            if n < 1:
                raise FormatError(source, lineno, "n_frames must be >= 1")
            if declared.setdefault(vid, n) != n:
                raise FormatError(source, lineno, f"video {vid} declared with two lengths")
            rows.setdefault(vid, {})
            continue
        frame = _field(rec, "frame", int, source, lineno)
        if frame < 1:
            raise FormatError(source, lineno, "frame must be >= 1")
        box = _bbox(rec, source, lineno)
        if "scores" in rec:
            scores = _numbers(rec["scores"], None, "scores", source, lineno)
            if len(scores) < 2 or min(scores) < 0 or max(scores) > 1:
                raise FormatError(source, lineno, "scores must hold >= 2 values in [0, 1]")
            widths.add(len(scores))
        elif "label" in rec and "score" in rec:
            label = _field(rec, "label", int, source, lineno)
            score = _numbers([rec["score"]], 1, "score", source, lineno)[0]
            if label < 1 or not 0 <= score <= 1:
                raise FormatError(source, lineno, "label must be >= 1 and score in [0, 1]")
            scores = (label, score)
            max_label = max(max_label, label)
        else:
            raise FormatError(source, lineno, "missing field 'scores' (or 'label' and 'score')")
        tid = rec.get("gt_track_id", -1)
        if tid is None:
            tid = -1
        if isinstance(tid, bool) or not isinstance(tid, int):
            raise FormatError(source, lineno, "gt_track_id must be an integer")
        rows.setdefault(vid, {}).setdefault(frame, []).append((box, scores, tid, lineno))

    if num_classes:
        width = num_classes + 1
        if widths - {width}:
            raise FormatError(source, 0, f"score vectors must have length {width}")
    else:
        if len(widths) > 1:
            raise FormatError(source, 0, f"score vectors of different lengths: {sorted(widths)}")
        width = max(widths | {max_label + 1, 2})
        if widths and max_label + 1 > width:
            raise FormatError(source, 0, f"label {max_label} exceeds the score vector length {width}")

    out: dict[str, list[FrameDetections]] = {}
    for vid in sorted(rows):
        by_frame = rows[vid]
        last = max(by_frame, default=0)
        n = declared.get(vid, last)
        if last > n:
            raise FormatError(source, by_frame[last][0][3], f"video {vid}: frame {last} beyond declared n_frames {n}")
        if vid not in declared:
            gaps = [f for f in range(1, n + 1) if f not in by_frame]
            if gaps:
                raise FormatError(source, 0, f"video {vid}: frames are not contiguous from 1, frame {gaps[0]} is missing")
        frames = []
        for f in range(1, n + 1):
            items = by_frame.get(f, [])
            if not items:
                frames.append(FrameDetections.empty(f, width))
                continue
            vecs = np.zeros((len(items), width))
            for i, (_, s, _, lineno) in enumerate(items):
                if isinstance(s, tuple):
                    if s[0] >= width:
                        raise FormatError(source, lineno, f"label {s[0]} exceeds {width - 1} classes")
                    vecs[i, s[0]] = s[1]
                else:
                    vecs[i] = s
            frames.append(FrameDetections(f, [it[0] for it in items], vecs, [it[2] for it in items]))
        out[vid] = frames
    return out


def write_detections(fh: IO[str], detections: Mapping[str, Sequence[FrameDetections]]) -> None:
    """Write score-vector records, one video length record first per video."""
    for vid in sorted(detections):
        frames = detections[vid]
        fh.write(_dumps({"video_id": vid, "n_frames": len(frames)}) + "\n")
        for fd in frames:
            for i in range(len(fd)):
                rec = {"video_id": vid, "frame": fd.frame, "bbox": fd.boxes[i].tolist(), "scores": fd.scores[i].tolist()}
                if fd.ids[i] >= 0:
                    rec["gt_track_id"] = int(fd.ids[i])
                fh.write(_dumps(rec) + "\n")


def read_ground_truth(path: str | Path) -> dict[str, list[GroundTruthTrack]]:
    """Read per-box ground-truth records into tracks.

    Each record: ``video_id, frame, track_id, class_id, bbox`` and optional
    ``occluded``. A track's frames must be contiguous.
    """
    source = str(path)
    acc: dict[tuple[str, int], dict] = {}
    for lineno, rec in _records(path):
        vid = _field(rec, "video_id", str, source, lineno)
        frame = _field(rec, "frame", int, source, lineno)
        tid = _field(rec, "track_id", int, source, lineno)
        cls = _field(rec, "class_id", int, source, lineno)
        if frame < 1 or cls < 1:
            raise FormatError(source, lineno, "frame and class_id must be >= 1")
        box = _bbox(rec, source, lineno)
        occ = rec.get("occluded", False)
        if not isinstance(occ, bool):
            raise FormatError(source, lineno, "occluded must be true or false")
        entry = acc.setdefault((vid, tid), {"class_id": cls, "frames": {}, "line": lineno})
        if entry["class_id"] != cls:
            raise FormatError(source, lineno, f"track {tid} of video {vid} changes class")
        if frame in entry["frames"]:
            raise FormatError(source, lineno, f"track {tid} of video {vid} has two boxes in frame {frame}")
        entry["frames"][frame] = (box, occ)

    out: dict[str, list[GroundTruthTrack]] = {}
    for (vid, tid) in sorted(acc):
        entry = acc[(vid, tid)]
        frames = sorted(entry["frames"])
        if frames[-1] - frames[0] + 1 != len(frames):
            missing = next(f for f in range(frames[0], frames[-1]) if f not in entry["frames"])
            raise FormatError(source, entry["line"], f"track {tid} of video {vid} skips frame {missing}")
        boxes = [entry["frames"][f][0] for f in frames]
        occ = [entry["frames"][f][1] for f in frames]
        out.setdefault(vid, []).append(GroundTruthTrack(tid, entry["class_id"], frames[0], boxes, occ))
    return out


def write_ground_truth(fh: IO[str], tracks: Mapping[str, Sequence[GroundTruthTrack]]) -> None:
    for vid in sorted(tracks):
        rows = []
        for tr in tracks[vid]:
            for k, f in enumerate(tr.frames):
                rows.append((f, tr.track_id, {
                    "video_id": vid, "frame": f, "track_id": tr.track_id, "class_id": tr.class_id,
                    "bbox": tr.boxes[k].tolist(), "occluded": bool(tr.occluded[k]),
                }))
        for _, _, rec in sorted(rows, key=lambda r: (r[0], r[1])):
            fh.write(_dumps(rec) + "\n")


def sort_scored(dets: Iterable[ScoredBox]) -> list[ScoredBox]:
    return sorted(dets, key=lambda d: (d.video_id, d.frame, d.label, -d.score, d.box, d.tubelet_id))


def write_scored(fh: IO[str], dets: Iterable[ScoredBox]) -> None:
    for d in sort_scored(dets):
        fh.write(_dumps({
            "video_id": d.video_id, "frame": d.frame, "bbox": list(d.box),
            "label": d.label, "score": d.score, "tubelet_id": d.tubelet_id,
        }) + "\n")


def read_scored(path: str | Path) -> list[ScoredBox]:
    """Read labelled output detections; score-vector records expand to one box per class."""
    source = str(path)
    out = []
    for lineno, rec in _records(path):
        if "n_frames" in rec and "frame" not in rec:
            continue
        vid = _field(rec, "video_id", str, source, lineno)
        frame = _field(rec, "frame", int, source, lineno)
        box = tuple(_bbox(rec, source, lineno))
        tid = rec.get("tubelet_id", -1)
        if "label" in rec and "score" in rec:
            label = _field(rec, "label", int, source, lineno)
            score = _numbers([rec["score"]], 1, "score", source, lineno)[0]
            out.append(ScoredBox(vid, frame, box, label, score, tid))
        elif "scores" in rec:
            for c, s in enumerate(_numbers(rec["scores"], None, "scores", source, lineno)[1:], 1):
                out.append(ScoredBox(vid, frame, box, c, s, tid))
        else:
            raise FormatError(source, lineno, "missing field 'label'/'score' or 'scores'")
    return out


def write_tubelets(fh: IO[str], tubelets: Mapping[str, Mapping[int, Sequence[Tubelet]]]) -> None:
    for vid in sorted(tubelets):
        tid = 0
        for c in sorted(tubelets[vid]):
            for t in tubelets[vid][c]:
                fh.write(_dumps({
                    "video_id": vid, "class_id": c, "tubelet_id": tid, "start_frame": t.start_frame,
                    "boxes": t.boxes.tolist(), "score": float(t.aggregated[c]),
                }) + "\n")
                tid += 1


# ---------------------------------------------------------------------------
# config files

CORPUS_PREFIX = "corpus."


def _coerce(raw: str, type_name: str, key: str, lineno: int, source: str):
    text = raw.strip()
    try:
        if type_name == "bool":
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if type_name == "int":
            return int(text)
        if type_name == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError(text)
            return v
        if type_name == "str":
            return text
        if type_name.startswith("tuple"):
            if text.lower() in ("", "none"):
                return None
            return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise FormatError(source, lineno, f"{key}: cannot read {text!r} as {type_name}") from None
    raise FormatError(source, lineno, f"{key}: unsupported type {type_name}")


def parse_config_text(text: str, source: str = "<config>") -> tuple[dict, dict]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Keys are :class:`PipelineConfig` fields, or :class:`CorpusSpec` fields
    prefixed with ``corpus.``. Returns ``(pipeline overrides, corpus overrides)``.
    """
    pipe_types = {f.name: f.type for f in fields(PipelineConfig)}
    corpus_types = {f.name: f.type for f in fields(CorpusSpec)}
    pipe, corpus = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(source, lineno, f"expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.startswith(CORPUS_PREFIX) and key[len(CORPUS_PREFIX):] in corpus_types:
            name = key[len(CORPUS_PREFIX):]
            corpus[name] = _coerce(value, corpus_types[name], key, lineno, source)
        elif key in pipe_types:
            pipe[key] = _coerce(value, pipe_types[key], key, lineno, source)
        else:
            raise FormatError(source, lineno, f"unknown config key {key!r}")
    return pipe, corpus


def read_config(path: str | Path) -> tuple[dict, dict]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), str(path))


def _fmt_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    return "none" if v is None else str(v).lower() if isinstance(v, bool) else repr(v) if isinstance(v, float) else str(v)


def dump_config(config: PipelineConfig, corpus: CorpusSpec | None = None) -> str:
    lines = [f"{k} = {_fmt_value(v)}" for k, v in sorted(config.to_dict().items()) if k != "workers"]
    if corpus is not None:
        lines += [f"{CORPUS_PREFIX}{f.name} = {_fmt_value(getattr(corpus, f.name))}" for f in fields(CorpusSpec)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# reports


def report_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_pr_curves(fh: IO[str], curves: Mapping[int, tuple[np.ndarray, np.ndarray]]) -> None:
    fh.write("class\trank\trecall\tprecision\n")
    for c in sorted(curves):
        rec, prec = curves[c]
        for k, (r, p) in enumerate(zip(rec, prec), 1):
            fh.write(f"{c}\t{k}\t{r!r}\t{p!r}\n")


def _pct(v: float | None) -> str:
    return "nan" if v is None else f"{100 * v:.2f}"


def ablation_tsv(rows: Sequence[AblationRow], subsets: Sequence[str] = ("slow", "medium", "fast", "occluded")) -> str:
    """Methods as rows, overall and per-subset mAP (percent) as columns."""
    lines = ["method\tmAP\t" + "\t".join(f"mAP_{s}" for s in subsets)]
    for r in rows:
        lines.append("\t".join([r.method, _pct(r.map)] + [_pct(r.subset_map.get(s)) for s in subsets]))
    return "\n".join(lines) + "\n"
