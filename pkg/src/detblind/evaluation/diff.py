"""Label churn between an origin dump and an adversarial dump."""

import logging
from collections import Counter
from typing import List

from pydantic import BaseModel, Field, model_validator

from ..common.errors import DomainError
from .detections import DEFAULT_SCORE_THRESHOLD, DetectionSet

logger = logging.getLogger(__name__)


class ImageDiff(BaseModel):
    image_id: int
    bbox_count_origin: int = Field(..., ge=0)
    bbox_count_adv: int = Field(..., ge=0)
    new_labels: int = Field(..., ge=0)
    disappeared_labels: int = Field(..., ge=0)


class DiffReport(BaseModel):
    """Box counts and new/disappeared labels, in total and per image."""

    threshold: float
    bbox_count_origin: int = Field(..., ge=0)
    bbox_count_adv: int = Field(..., ge=0)
    new_labels: int = Field(..., ge=0)
    disappeared_labels: int = Field(..., ge=0)
    per_image: List[ImageDiff] = Field(default_factory=list)

    @model_validator(mode="after")
    def _totals_match(self) -> "DiffReport":
        if sum(row.new_labels for row in self.per_image) != self.new_labels:
            raise ValueError("per-image new labels do not sum to the total")
        if sum(row.disappeared_labels for row in self.per_image) != self.disappeared_labels:
            raise ValueError("per-image disappeared labels do not sum to the total")
        return self


def diff_labels(
    origin: DetectionSet, adversarial: DetectionSet, threshold: float = DEFAULT_SCORE_THRESHOLD
) -> DiffReport:
    """Per-image category multiset difference above ``threshold``.

    ``new`` counts instances of a category beyond its origin count, and
    ``disappeared`` counts instances missing from the adversarial dump.
    """
    if not (0.0 <= threshold <= 1.0):
        raise DomainError(f"Score threshold must lie in [0, 1], got {threshold}")
    rows: List[ImageDiff] = []
    for image_id in sorted(set(origin.image_ids()) | set(adversarial.image_ids())):
        before = Counter(d.category_id for d in origin.for_image(image_id, threshold))
        after = Counter(d.category_id for d in adversarial.for_image(image_id, threshold))
        rows.append(
            ImageDiff(
                image_id=image_id,
                bbox_count_origin=sum(before.values()),
                bbox_count_adv=sum(after.values()),
                new_labels=sum((after - before).values()),
                disappeared_labels=sum((before - after).values()),
            )
        )

    report = DiffReport(
        threshold=threshold,
        bbox_count_origin=sum(row.bbox_count_origin for row in rows),
        bbox_count_adv=sum(row.bbox_count_adv for row in rows),
        new_labels=sum(row.new_labels for row in rows),
        disappeared_labels=sum(row.disappeared_labels for row in rows),
        per_image=rows,
    )
    logger.info(
        f"Label diff at {threshold}: boxes {report.bbox_count_origin} -> {report.bbox_count_adv}, "
        f"new {report.new_labels}, disappeared {report.disappeared_labels}"
    )
    return report
