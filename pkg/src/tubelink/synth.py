"""Deterministic synthetic video-detection corpora.

Ground-truth tracks move at constant speed with a little heading noise and
bounce off the canvas edges. Detections are the ground-truth boxes with
localisation noise and class scores that are high for the true class, except
inside contiguous score-drop windows (blur/defocus stand-ins) and occlusion
windows where the true-class score is suppressed. Random false positives and
missed detections complete the degradation model.

Every video draws from its own ``SeedSequence`` child, so a corpus is a pure
function of its :class:`CorpusSpec`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .types import FrameDetections, GroundTruthTrack

SPEED_POPULATIONS = ("slow", "medium", "fast")


class InfeasibleSpecError(ValueError):
    """A corpus spec that cannot be generated."""


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 42
    n_videos: int = 50
    frames_per_video: int = 60
    canvas_width: float = 640.0
    canvas_height: float = 480.0
    min_objects: int = 1
    max_objects: int = 3
    num_classes: int = 5
    min_size: float = 48.0
    max_size: float = 120.0
    max_aspect: float = 1.25
    # population mix and per-frame displacement as a fraction of sqrt(w * h)
    slow_fraction: float = 1 / 3
    medium_fraction: float = 1 / 3
    slow_speed: float = 0.004
    medium_speed: float = 0.018
    fast_speed: float = 0.3
    heading_noise: float = 0.03
    speed_noise: float = 0.03
    # detector quality
    min_true_score: float = 0.6
    max_true_score: float = 0.95
    residual_score: float = 0.01
    loc_jitter: float = 0.03
    miss_rate: float = 0.02
    fp_rate: float = 0.5
    min_fp_score: float = 0.2
    max_fp_score: float = 0.7
    # score-drop windows: stationary fraction of frames, mean length, depth
    drop_prob: float = 0.15
    drop_window: float = 6.0
    drop_depth: float = 0.8
    sibling_share: float = 0.5
    # occlusion windows
    occlusion_prob: float = 0.1
    occlusion_window: float = 8.0
    occlusion_depth: float = 0.5
    occlusion_jitter: float = 0.05
    # speed coupling of drop probability, see degradation_speed_coupling
    speed_coupling: float = 1.0
    drop_increment: float = 0.25
    drop_prob_by_speed: tuple[float, float, float] | None = None
    # tracks appear and disappear inside the video
    partial_lifetimes: bool = False
    min_lifetime_fraction: float = 0.5

    def validate(self) -> None:
        probs = {
            "slow_fraction": self.slow_fraction, "medium_fraction": self.medium_fraction,
            "miss_rate": self.miss_rate, "drop_prob": self.drop_prob, "drop_depth": self.drop_depth,
            "sibling_share": self.sibling_share, "occlusion_prob": self.occlusion_prob,
            "occlusion_depth": self.occlusion_depth, "speed_coupling": self.speed_coupling,
            "min_true_score": self.min_true_score, "max_true_score": self.max_true_score,
            "min_fp_score": self.min_fp_score, "max_fp_score": self.max_fp_score,
            "min_lifetime_fraction": self.min_lifetime_fraction, "residual_score": self.residual_score,
        }
        for name, v in probs.items():
            if not 0.0 <= v <= 1.0:
                raise InfeasibleSpecError(f"{name} must lie in [0, 1], got {v}")
        if self.drop_prob_by_speed is not None and not all(0.0 <= p <= 1.0 for p in self.drop_prob_by_speed):
            raise InfeasibleSpecError("drop_prob_by_speed entries must lie in [0, 1]")
        if self.slow_fraction + self.medium_fraction > 1.0:
            raise InfeasibleSpecError("slow_fraction + medium_fraction exceeds 1")
        if self.num_classes < 1:
            raise InfeasibleSpecError("num_classes must be >= 1")
        if self.n_videos < 0 or self.frames_per_video < 1:
            raise InfeasibleSpecError("need n_videos >= 0 and frames_per_video >= 1")
        if not 0 <= self.min_objects <= self.max_objects:
            raise InfeasibleSpecError("need 0 <= min_objects <= max_objects")
        if not 0 < self.min_size <= self.max_size:
            raise InfeasibleSpecError("need 0 < min_size <= max_size")
        if self.max_aspect < 1.0:
            raise InfeasibleSpecError("max_aspect must be >= 1")
        if self.max_size * self.max_aspect >= min(self.canvas_width, self.canvas_height):
            raise InfeasibleSpecError("objects can be larger than the canvas")
        if self.min_true_score > self.max_true_score or self.min_fp_score > self.max_fp_score:
            raise InfeasibleSpecError("score ranges are inverted")
        if self.drop_window < 1 or self.occlusion_window < 1:
            raise InfeasibleSpecError("mean window lengths must be >= 1 frame")
        if min(self.loc_jitter, self.occlusion_jitter, self.fp_rate, self.heading_noise, self.speed_noise, self.drop_increment) < 0:
            raise InfeasibleSpecError("noise magnitudes and rates must be non-negative")

    @classmethod
    def noiseless(cls, **overrides) -> "CorpusSpec":
        """Perfect detector: no jitter, misses, false positives or score drops."""
        base = dict(
            loc_jitter=0.0, miss_rate=0.0, fp_rate=0.0, drop_prob=0.0, occlusion_prob=0.0,
            occlusion_jitter=0.0, min_true_score=0.99, max_true_score=0.99, residual_score=0.0,
        )
        base.update(overrides)
        return cls(**base)

    def drop_probability(self, population: str) -> float:
        if self.drop_prob_by_speed is None:
            return self.drop_prob
        return self.drop_prob_by_speed[SPEED_POPULATIONS.index(population)]


def spec_fields() -> dict[str, type]:
    return {f.name: f.type for f in fields(CorpusSpec)}


def degradation_speed_coupling(spec: CorpusSpec) -> CorpusSpec:
    """Make score drops more frequent for faster populations.

    Slow tracks keep ``drop_prob``; medium and fast tracks get
    ``speed_coupling * drop_increment`` times 1/2 and 1 on top. Zero coupling
    returns ``spec`` itself.
    """
    if spec.speed_coupling == 0:
        return spec
    inc = spec.speed_coupling * spec.drop_increment
    probs = tuple(min(1.0, spec.drop_prob + inc * k) for k in (0.0, 0.5, 1.0))
    return replace(spec, drop_prob_by_speed=probs)


@dataclass
class Corpus:
    spec: CorpusSpec
    tracks: dict[str, list[GroundTruthTrack]]
    detections: dict[str, list[FrameDetections]]
    n_frames: dict[str, int]
    population: dict[tuple[str, int], str] = field(default_factory=dict)
    drop_flags: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)

    @property
    def video_ids(self) -> list[str]:
        return sorted(self.tracks)


def _window_chain(rng: np.random.Generator, n: int, p: float, mean_len: float) -> np.ndarray:
    """Two-state Markov chain with stationary on-fraction ``p`` and mean on-run ``mean_len``."""
    if p <= 0.0:
        rng.random(n)
        return np.zeros(n, dtype=np.bool_)
    if p >= 1.0:
        rng.random(n)
        return np.ones(n, dtype=np.bool_)
    leave = 1.0 / mean_len
    enter = min(1.0, p * leave / (1.0 - p))
    u = rng.random(n)
    out = np.zeros(n, dtype=np.bool_)
    state = u[0] < p
    out[0] = state
    for t in range(1, n):
        state = (u[t] >= leave) if state else (u[t] < enter)
        out[t] = state
    return out


def _move(rng, spec: CorpusSpec, n: int, w: float, h: float, speed: float) -> np.ndarray:
    W, H = spec.canvas_width, spec.canvas_height
    cx = rng.uniform(w / 2, W - w / 2)
    cy = rng.uniform(h / 2, H - h / 2)
    heading = rng.uniform(0.0, 2 * np.pi)
    step = speed * np.sqrt(w * h)
    headings = heading + np.cumsum(rng.normal(0.0, spec.heading_noise, n))
    steps = step * (1.0 + rng.normal(0.0, spec.speed_noise, n))
    out = np.empty((n, 4))
    vx_sign, vy_sign = 1.0, 1.0
    for t in range(n):
        if t:
            cx += vx_sign * steps[t] * np.cos(headings[t])
            cy += vy_sign * steps[t] * np.sin(headings[t])
            # reflect off the canvas edges
            if cx < w / 2:
                cx, vx_sign = w - cx, -vx_sign
            elif cx > W - w / 2:
                cx, vx_sign = 2 * (W - w / 2) - cx, -vx_sign
            if cy < h / 2:
                cy, vy_sign = h - cy, -vy_sign
            elif cy > H - h / 2:
                cy, vy_sign = 2 * (H - h / 2) - cy, -vy_sign
        out[t] = (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)
    return out


def _score_vector(rng, spec: CorpusSpec, label: int, true_score: float, sibling: int, sibling_score: float) -> np.ndarray:
    vec = rng.uniform(0.0, spec.residual_score, spec.num_classes + 1) if spec.residual_score > 0 else np.zeros(spec.num_classes + 1)
    vec[0] = 0.0
    vec[label] = true_score
    if sibling != label:
        vec[sibling] = max(vec[sibling], sibling_score)
    fixed = vec[label] + (vec[sibling] if sibling != label else 0.0)
    others = vec[1:].sum() - fixed
    room = max(1.0 - fixed, 0.0)
    if others > room:
        mask = np.ones_like(vec, dtype=bool)
        mask[[0, label, sibling]] = False
        vec[mask] *= room / others
    vec[0] = max(1.0 - vec[1:].sum(), 0.0)
    return np.clip(vec, 0.0, 1.0)


def _clip_box(box: np.ndarray, spec: CorpusSpec) -> np.ndarray:
    x1, y1, x2, y2 = box
    x1 = min(max(x1, 0.0), spec.canvas_width - 1.0)
    y1 = min(max(y1, 0.0), spec.canvas_height - 1.0)
    x2 = min(max(x2, x1 + 1.0), spec.canvas_width)
    y2 = min(max(y2, y1 + 1.0), spec.canvas_height)
    return np.array([x1, y1, x2, y2])


def _generate_video(spec: CorpusSpec, vid: str, seq: np.random.SeedSequence):
    motion_rng, degrade_rng, fp_rng, life_rng = (np.random.default_rng(s) for s in seq.spawn(4))
    n = spec.frames_per_video
    C = spec.num_classes
    n_obj = int(motion_rng.integers(spec.min_objects, spec.max_objects + 1))

    frame_rows: list[list[tuple[np.ndarray, np.ndarray, int]]] = [[] for _ in range(n)]
    tracks, population, drops, lifetimes = [], {}, {}, {}
    for k in range(n_obj):
        u = motion_rng.random()
        pop = "slow" if u < spec.slow_fraction else "medium" if u < spec.slow_fraction + spec.medium_fraction else "fast"
        speed = {"slow": spec.slow_speed, "medium": spec.medium_speed, "fast": spec.fast_speed}[pop]
        label = int(motion_rng.integers(1, C + 1))
        side = motion_rng.uniform(spec.min_size, spec.max_size)
        aspect = np.exp(motion_rng.uniform(-np.log(spec.max_aspect), np.log(spec.max_aspect)))
        w, h = side * np.sqrt(aspect), side / np.sqrt(aspect)
        boxes = _move(motion_rng, spec, n, w, h, speed)

        dropped = _window_chain(degrade_rng, n, spec.drop_probability(pop), spec.drop_window)
        occluded = _window_chain(degrade_rng, n, spec.occlusion_prob, spec.occlusion_window)
        missed = degrade_rng.random(n) < spec.miss_rate
        sibling = label % C + 1
        for t in range(n):
            size = np.array([w, h, w, h])
            sigma = spec.loc_jitter + (spec.occlusion_jitter if occluded[t] else 0.0)
            noise = degrade_rng.normal(0.0, 1.0, 4) * sigma * size
            true_score = degrade_rng.uniform(spec.min_true_score, spec.max_true_score)
            sib = 0.0
            if dropped[t]:
                removed = true_score * spec.drop_depth
                true_score -= removed
                sib = removed * spec.sibling_share
            if occluded[t]:
                true_score *= 1.0 - spec.occlusion_depth
            vec = _score_vector(degrade_rng, spec, label, true_score, sibling, sib)
            if missed[t]:
                continue
            det_box = boxes[t] + noise if sigma > 0 else boxes[t].copy()
            frame_rows[t].append((_clip_box(det_box, spec) if sigma > 0 else det_box, vec, k))
        tracks.append(GroundTruthTrack(k, label, 1, boxes, occluded))
        population[(vid, k)] = pop
        drops[(vid, k)] = dropped

        length = int(np.ceil(life_rng.uniform(spec.min_lifetime_fraction, 1.0) * n))
        start = int(life_rng.integers(1, n - length + 2))
        lifetimes[k] = (start, start + length - 1)

    for t in range(n):
        for _ in range(fp_rng.poisson(spec.fp_rate)):
            side = fp_rng.uniform(spec.min_size, spec.max_size)
            cx = fp_rng.uniform(side / 2, spec.canvas_width - side / 2)
            cy = fp_rng.uniform(side / 2, spec.canvas_height - side / 2)
            label = int(fp_rng.integers(1, C + 1))
            vec = _score_vector(fp_rng, spec, label, fp_rng.uniform(spec.min_fp_score, spec.max_fp_score), label, 0.0)
            frame_rows[t].append((np.array([cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2]), vec, -1))

    if spec.partial_lifetimes:
        clipped = []
        for tr in tracks:
            a, b = lifetimes[tr.track_id]
            clipped.append(GroundTruthTrack(tr.track_id, tr.class_id, a, tr.boxes[a - 1:b], tr.occluded[a - 1:b]))
            drops[(vid, tr.track_id)] = drops[(vid, tr.track_id)][a - 1:b]
        tracks = clipped
        for t in range(n):
            frame_rows[t] = [r for r in frame_rows[t] if r[2] < 0 or lifetimes[r[2]][0] <= t + 1 <= lifetimes[r[2]][1]]

    frames = []
    for t in range(n):
        rows = frame_rows[t]
        perm = fp_rng.permutation(len(rows))
        rows = [rows[i] for i in perm]
        if rows:
            fd = FrameDetections(t + 1, np.stack([r[0] for r in rows]), np.stack([r[1] for r in rows]), np.array([r[2] for r in rows]))
        else:
            fd = FrameDetections.empty(t + 1, C + 1)
        frames.append(fd)
    return tracks, frames, population, drops


def generate_corpus(spec: CorpusSpec) -> Corpus:
    """Generate ground truth and degraded detections for every video of ``spec``."""
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.n_videos)
    tracks, dets, n_frames, population, drops = {}, {}, {}, {}, {}
    for i, seq in enumerate(children):
        vid = f"vid{i:04d}"
        tr, fr, pop, dr = _generate_video(spec, vid, seq)
        tracks[vid] = tr
        dets[vid] = fr
        n_frames[vid] = spec.frames_per_video
        population.update(pop)
        drops.update(dr)
    return Corpus(spec, tracks, dets, n_frames, population, drops)
