"""Toolkit for pseudo-label refinement and evaluation in dense shelf detection."""

from .geometry import BBox, ScoredBox, area, intersection_area, iou_min, iou_union
from .suppression import (
    IoUKind,
    Stage,
    SuppressionConfig,
    nms,
    nms_fast,
    refine,
    refine_detailed,
    score_filter,
)
from .dataset import (
    Annotation,
    Category,
    DetectionDataset,
    DetectionResults,
    ImageRecord,
    Source,
    dataset_stats,
    parse_dataset,
    parse_results,
    write_dataset,
    write_results,
)
from .evaluation import EvalConfig, EvalReport, average_precision, evaluate, match_image
from .selftrain import (
    FrameSamplerConfig,
    RoundManifest,
    merge,
    pseudo_label,
    record_round,
    sample_frames,
)
from .synth import CorruptionSpec, Provenance, ProvenanceKind, SceneSpec, corrupt, generate_scene

__all__ = [
    "BBox",
    "ScoredBox",
    "area",
    "intersection_area",
    "iou_union",
    "iou_min",
    "IoUKind",
    "Stage",
    "SuppressionConfig",
    "score_filter",
    "nms",
    "nms_fast",
    "refine",
    "refine_detailed",
    "ImageRecord",
    "Annotation",
    "Category",
    "Source",
    "DetectionDataset",
    "DetectionResults",
    "parse_dataset",
    "write_dataset",
    "parse_results",
    "write_results",
    "dataset_stats",
    "EvalConfig",
    "EvalReport",
    "match_image",
    "average_precision",
    "evaluate",
    "FrameSamplerConfig",
    "RoundManifest",
    "pseudo_label",
    "merge",
    "sample_frames",
    "record_round",
    "SceneSpec",
    "CorruptionSpec",
    "Provenance",
    "ProvenanceKind",
    "generate_scene",
    "corrupt",
]
