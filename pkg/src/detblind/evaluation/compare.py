"""Multi-attack comparison and per-target suppression checks."""

import logging
from typing import Dict, List, Mapping, Optional, Sequence

from pydantic import BaseModel, Field

from ..common.errors import DomainError
from .detections import BBox, DEFAULT_SCORE_THRESHOLD, DetectionSet, align_image_spaces, count_bboxes
from .diff import DiffReport, diff_labels
from .metrics import EvalReport, GroundTruth, compute_map, iou

logger = logging.getLogger(__name__)

SUPPRESSION_IOU = 0.5
_DROP_FIELDS = ("map", "ap50", "ap75", "ar")


def relative_drop(before: float, after: float) -> Optional[float]:
    """``(before - after) / before`` as a percentage; None when ``before`` is 0."""
    if before == 0:
        return None
    return 100.0 * (before - after) / before


class AttackComparison(BaseModel):
    name: str
    bbox_count: int
    diff: DiffReport
    metrics: EvalReport
    drops: Dict[str, Optional[float]] = Field(default_factory=dict)
    orphans: List[int] = Field(default_factory=list)


class ComparisonTable(BaseModel):
    """Origin figures plus one row per attack, in input order."""

    threshold: float
    origin_bbox_count: int
    origin_metrics: EvalReport
    attacks: List[AttackComparison] = Field(default_factory=list)


def compare_attacks(
    origin: DetectionSet,
    attacks: Mapping[str, DetectionSet],
    ground_truth: GroundTruth,
    threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> ComparisonTable:
    """Evaluate every adversarial dump against the origin dump and the ground truth."""
    origin_metrics = compute_map(origin, ground_truth)
    rows: List[AttackComparison] = []
    for name, adversarial in attacks.items():
        logger.info(f"Comparing attack '{name}' ({len(adversarial)} detections)")
        aligned_origin, aligned_adv, orphans = align_image_spaces(origin, adversarial, known=list(ground_truth))
        metrics = compute_map(aligned_adv, ground_truth)
        drops = {key: relative_drop(getattr(origin_metrics, key), getattr(metrics, key)) for key in _DROP_FIELDS}
        rows.append(
            AttackComparison(
                name=name,
                bbox_count=count_bboxes(aligned_adv, threshold),
                diff=diff_labels(aligned_origin, aligned_adv, threshold),
                metrics=metrics,
                drops=drops,
                orphans=orphans,
            )
        )
    return ComparisonTable(
        threshold=threshold,
        origin_bbox_count=count_bboxes(origin, threshold),
        origin_metrics=origin_metrics,
        attacks=rows,
    )


class AttackedTarget(BaseModel):
    image_id: int
    label: int
    bbox: BBox


class SuppressionResult(BaseModel):
    image_id: int
    label: int
    bbox: BBox
    detected_before: bool
    detected_after: bool
    best_iou_after: float = Field(..., ge=0.0, le=1.0)

    @property
    def suppressed(self) -> bool:
        return self.detected_before and not self.detected_after


def _best_overlap(detections: DetectionSet, target: AttackedTarget, threshold: float) -> float:
    overlaps = [
        iou(d.bbox, target.bbox)
        for d in detections.for_image(target.image_id, threshold)
        if d.category_id == target.label
    ]
    return max(overlaps, default=0.0)


def target_suppression(
    origin: DetectionSet,
    adversarial: DetectionSet,
    targets: Sequence[AttackedTarget],
    threshold: float = DEFAULT_SCORE_THRESHOLD,
    iou_threshold: float = SUPPRESSION_IOU,
) -> List[SuppressionResult]:
    """Whether each attacked target is still detected with its label over its box."""
    if not (0.0 <= threshold <= 1.0):
        raise DomainError(f"Score threshold must lie in [0, 1], got {threshold}")
    results = []
    for target in targets:
        after = _best_overlap(adversarial, target, threshold)
        results.append(
            SuppressionResult(
                image_id=target.image_id,
                label=target.label,
                bbox=target.bbox,
                detected_before=_best_overlap(origin, target, threshold) >= iou_threshold,
                detected_after=after >= iou_threshold,
                best_iou_after=after,
            )
        )
    suppressed = sum(result.suppressed for result in results)
    logger.info(f"Suppressed {suppressed} of {len(results)} attacked targets")
    return results
