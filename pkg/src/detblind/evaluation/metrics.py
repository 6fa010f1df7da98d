"""COCO-style box AP/AR.

Per category and IoU threshold, detections are taken in descending score
order (at most ``max_dets`` per image) and greedily matched to the unmatched
ground-truth box of highest IoU. Precision is max-interpolated and sampled at
101 recall points. Size-binned figures ignore ground truth outside the bin,
along with unmatched detections outside it.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..segmentation.coco import GroundTruthBox
from .detections import BBox, Detection, DetectionSet

logger = logging.getLogger(__name__)

GroundTruth = Mapping[int, Sequence[GroundTruthBox]]
AreaRange = Tuple[float, float]

IOU_THRESHOLDS: Tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
MAX_DETECTIONS = 100
RECALL_CAPS = (1, 10, 100)

AREA_ALL: AreaRange = (0.0, float("inf"))
AREA_RANGES: Dict[str, AreaRange] = {
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, float("inf")),
}


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of ``(n, 4)`` and ``(m, 4)`` xywh boxes."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    left = np.maximum(a[:, None, 0], b[None, :, 0])
    top = np.maximum(a[:, None, 1], b[None, :, 1])
    right = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    bottom = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    inter = np.clip(right - left, 0.0, None) * np.clip(bottom - top, 0.0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def iou(a: BBox, b: BBox) -> float:
    return float(iou_matrix(np.asarray([a]), np.asarray([b]))[0, 0])


@dataclass
class _CategoryRecords:
    """Matching outcome of every kept detection of one category at one threshold."""

    scores: List[float] = field(default_factory=list)
    true_positive: List[bool] = field(default_factory=list)
    ignored: List[bool] = field(default_factory=list)
    rank: List[int] = field(default_factory=list)


def _gt_area(box: GroundTruthBox) -> float:
    return box.area if box.area is not None else box.bbox[2] * box.bbox[3]


def _in_range(area: float, area_range: AreaRange) -> bool:
    return area_range[0] <= area < area_range[1]


def _match(ious: np.ndarray, gt_ignore: np.ndarray, det_outside: np.ndarray, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """Greedy matching for score-sorted detections; returns ``(tp, ignored)`` flags."""
    n_det, n_gt = ious.shape
    matched = np.zeros(n_gt, dtype=bool)
    tp = np.zeros(n_det, dtype=bool)
    ignored = np.zeros(n_det, dtype=bool)
    for di in range(n_det):
        best = -1
        # Regular ground truth is preferred over ignored ground truth.
        for pool in (~gt_ignore, gt_ignore):
            candidates = np.flatnonzero(pool & ~matched & (ious[di] >= threshold))
            if candidates.size:
                best = int(candidates[np.argmax(ious[di, candidates])])
                break
        if best >= 0:
            matched[best] = True
            tp[di] = not gt_ignore[best]
            ignored[di] = bool(gt_ignore[best])
        else:
            ignored[di] = bool(det_outside[di])
    return tp, ignored


class _Evaluation:
    """Matching results for every (category, threshold) over all images."""

    def __init__(
        self,
        detections: DetectionSet,
        ground_truth: GroundTruth,
        thresholds: Sequence[float],
        area_range: AreaRange = AREA_ALL,
        max_dets: int = MAX_DETECTIONS,
    ):
        self.thresholds = tuple(thresholds)
        self.records: Dict[Tuple[int, float], _CategoryRecords] = defaultdict(_CategoryRecords)
        self.gt_counts: Dict[int, int] = defaultdict(int)
        gt_categories = {box.category_id for boxes in ground_truth.values() for box in boxes}
        self.categories = sorted(gt_categories | set(detections.categories()))

        for image_id in sorted(set(ground_truth) | set(detections.image_ids())):
            by_category: Dict[int, List[Detection]] = defaultdict(list)
            for detection in detections.for_image(image_id):
                by_category[detection.category_id].append(detection)
            gt_by_category: Dict[int, List[GroundTruthBox]] = defaultdict(list)
            for box in ground_truth.get(image_id, []):
                gt_by_category[box.category_id].append(box)

            for category in set(by_category) | set(gt_by_category):
                gts = gt_by_category.get(category, [])
                gt_ignore = np.asarray([not _in_range(_gt_area(g), area_range) for g in gts], dtype=bool)
                self.gt_counts[category] += int((~gt_ignore).sum())
                dets = sorted(by_category.get(category, []), key=lambda d: -d.score)[:max_dets]
                if not dets:
                    continue
                det_outside = np.asarray([not _in_range(d.area, area_range) for d in dets], dtype=bool)
                ious = iou_matrix(np.asarray([d.bbox for d in dets]), np.asarray([g.bbox for g in gts]))
                ious = ious.reshape(len(dets), len(gts))
                for threshold in self.thresholds:
                    tp, ignored = _match(ious, gt_ignore, det_outside, threshold)
                    entry = self.records[(category, threshold)]
                    entry.scores.extend(d.score for d in dets)
                    entry.true_positive.extend(tp.tolist())
                    entry.ignored.extend(ignored.tolist())
                    entry.rank.extend(range(len(dets)))

    def evaluated_categories(self) -> List[int]:
        return [c for c in self.categories if self.gt_counts.get(c, 0) > 0]

    def skipped_categories(self) -> List[int]:
        return [c for c in self.categories if self.gt_counts.get(c, 0) == 0]

    def precision_recall(self, category: int, threshold: float, cap: int = MAX_DETECTIONS) -> Tuple[float, float]:
        """``(AP, recall)`` of one category at one threshold."""
        n_gt = self.gt_counts.get(category, 0)
        entry = self.records.get((category, threshold))
        if n_gt == 0 or entry is None or not entry.scores:
            return 0.0, 0.0
        scores = np.asarray(entry.scores)
        keep = ~np.asarray(entry.ignored) & (np.asarray(entry.rank) < cap)
        order = np.argsort(-scores[keep], kind="mergesort")
        hits = np.asarray(entry.true_positive)[keep][order]
        if hits.size == 0:
            return 0.0, 0.0
        tps = np.cumsum(hits)
        fps = np.cumsum(~hits)
        recall = tps / n_gt
        precision = tps / (tps + fps)
        envelope = np.maximum.accumulate(precision[::-1])[::-1]
        idx = np.searchsorted(recall, RECALL_POINTS, side="left")
        sampled = np.where(idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0)
        return float(sampled.mean()), float(recall[-1])

    def mean_ap(self, threshold: float) -> float:
        categories = self.evaluated_categories()
        if not categories:
            return 0.0
        return float(np.mean([self.precision_recall(c, threshold)[0] for c in categories]))

    def mean_over_thresholds(self, cap: int = MAX_DETECTIONS, recall: bool = False) -> Optional[float]:
        categories = self.evaluated_categories()
        if not categories:
            return None
        values = [
            self.precision_recall(c, t, cap)[1 if recall else 0] for c in categories for t in self.thresholds
        ]
        return float(np.mean(values))


def compute_ap(
    detections: DetectionSet,
    ground_truth: GroundTruth,
    iou_threshold: float = 0.5,
    max_dets: int = MAX_DETECTIONS,
) -> float:
    """Category-averaged AP at one IoU threshold; categories without ground truth are skipped."""
    evaluation = _Evaluation(detections, ground_truth, (iou_threshold,), max_dets=max_dets)
    skipped = evaluation.skipped_categories()
    if skipped:
        logger.warning(f"Categories without ground truth skipped: {skipped}")
    return evaluation.mean_ap(iou_threshold)


class EvalReport(BaseModel):
    """mAP family, AR at 1/10/100 detections and size-binned figures."""

    map: float = Field(..., ge=0.0, le=1.0)
    ap50: float = Field(..., ge=0.0, le=1.0)
    ap75: float = Field(..., ge=0.0, le=1.0)
    ar: float = Field(..., ge=0.0, le=1.0)
    ar1: float = Field(..., ge=0.0, le=1.0)
    ar10: float = Field(..., ge=0.0, le=1.0)
    ap_small: Optional[float] = Field(None, ge=0.0, le=1.0)
    ap_medium: Optional[float] = Field(None, ge=0.0, le=1.0)
    ap_large: Optional[float] = Field(None, ge=0.0, le=1.0)
    ar_small: Optional[float] = Field(None, ge=0.0, le=1.0)
    ar_medium: Optional[float] = Field(None, ge=0.0, le=1.0)
    ar_large: Optional[float] = Field(None, ge=0.0, le=1.0)
    per_category_ap: Dict[int, float] = Field(default_factory=dict)
    skipped_categories: List[int] = Field(default_factory=list)
    images: int = 0
    max_detections: int = MAX_DETECTIONS


def compute_map(
    detections: DetectionSet,
    ground_truth: GroundTruth,
    max_dets: int = MAX_DETECTIONS,
) -> EvalReport:
    """mAP over IoU 0.50:0.05:0.95 plus AP50, AP75, AR and size bins."""
    full = _Evaluation(detections, ground_truth, IOU_THRESHOLDS, max_dets=max_dets)
    skipped = full.skipped_categories()
    if skipped:
        logger.warning(f"Categories without ground truth skipped: {skipped}")

    per_category = {
        c: float(np.mean([full.precision_recall(c, t)[0] for t in IOU_THRESHOLDS]))
        for c in full.evaluated_categories()
    }
    recalls = {cap: full.mean_over_thresholds(cap=cap, recall=True) or 0.0 for cap in RECALL_CAPS}
    report = EvalReport(
        map=full.mean_over_thresholds() or 0.0,
        ap50=full.mean_ap(0.5),
        ap75=full.mean_ap(0.75),
        ar=recalls[100],
        ar1=recalls[1],
        ar10=recalls[10],
        per_category_ap=per_category,
        skipped_categories=skipped,
        images=len(set(ground_truth) | set(detections.image_ids())),
        max_detections=max_dets,
    )

    has_areas = all(box.area is not None for boxes in ground_truth.values() for box in boxes)
    if not has_areas:
        logger.warning("Ground truth lacks areas; size-binned AP/AR omitted")
        return report
    binned = {}
    for name, area_range in AREA_RANGES.items():
        evaluation = _Evaluation(detections, ground_truth, IOU_THRESHOLDS, area_range=area_range, max_dets=max_dets)
        binned[f"ap_{name}"] = evaluation.mean_over_thresholds()
        binned[f"ar_{name}"] = evaluation.mean_over_thresholds(recall=True)
    return report.model_copy(update=binned)
