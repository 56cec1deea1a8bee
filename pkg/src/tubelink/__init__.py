"""Tubelet-based rescoring of per-frame video object detections."""

from ._backend import backend_name
from .assembly import assemble_short_tubelets, cuboid_recall, oracle_cuboids, pair_union_proposals
from .baselines import frame_nms, nms, seq_nms, seq_nms_link
from .evaluation import EvalReport, average_precision, compute_ap, evaluate, motion_speed_split, strict_tubelet_ap
from .geometry import Box, EmptyInputError, InvalidBoxError, bounding_box, iou, iou_matrix
from .linking import emit_frame_detections, link_short_tubelets
from .pipeline import METHODS, PipelineConfig, PipelineResult, run_ablation, run_pipeline
from .segmentation import SegmentPlan, plan_segments
from .synth import Corpus, CorpusSpec, InfeasibleSpecError, degradation_speed_coupling, generate_corpus
from .tubelet import Tubelet, aggregate_scores, tubelet_nms, tubelet_overlap
from .types import FrameDetections, GroundTruthTrack, ScoredBox

__version__ = "0.1.0"

__all__ = [
    "Box", "Corpus", "CorpusSpec", "EmptyInputError", "EvalReport", "FrameDetections", "GroundTruthTrack",
    "InfeasibleSpecError", "InvalidBoxError", "METHODS", "PipelineConfig", "PipelineResult", "ScoredBox",
    "SegmentPlan", "Tubelet", "aggregate_scores", "assemble_short_tubelets", "average_precision",
    "backend_name", "bounding_box", "compute_ap", "cuboid_recall", "degradation_speed_coupling",
    "emit_frame_detections", "evaluate", "frame_nms", "generate_corpus", "iou", "iou_matrix",
    "link_short_tubelets", "motion_speed_split", "nms", "oracle_cuboids", "pair_union_proposals",
    "plan_segments", "run_ablation", "run_pipeline", "seq_nms", "seq_nms_link", "strict_tubelet_ap",
    "tubelet_nms", "tubelet_overlap",
]
