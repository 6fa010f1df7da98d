"""Detector dump ingestion, label diffing and COCO-style AP/AR."""

from .compare import (
    AttackComparison,
    AttackedTarget,
    ComparisonTable,
    SuppressionResult,
    compare_attacks,
    relative_drop,
    target_suppression,
)
from .detections import (
    DEFAULT_SCORE_THRESHOLD,
    Detection,
    DetectionSet,
    align_image_spaces,
    count_bboxes,
    parse_detections,
    serialize_detections,
)
from .diff import DiffReport, ImageDiff, diff_labels
from .metrics import IOU_THRESHOLDS, EvalReport, compute_ap, compute_map, iou, iou_matrix

__all__ = [
    "AttackComparison",
    "AttackedTarget",
    "ComparisonTable",
    "DEFAULT_SCORE_THRESHOLD",
    "Detection",
    "DetectionSet",
    "DiffReport",
    "EvalReport",
    "IOU_THRESHOLDS",
    "ImageDiff",
    "SuppressionResult",
    "align_image_spaces",
    "compare_attacks",
    "compute_ap",
    "compute_map",
    "count_bboxes",
    "diff_labels",
    "iou",
    "iou_matrix",
    "parse_detections",
    "relative_drop",
    "serialize_detections",
    "target_suppression",
]
