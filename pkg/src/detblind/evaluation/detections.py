"""Detector output dumps in the COCO results format.

A dump is a JSON array of ``{image_id, category_id, bbox, score}`` records
with ``bbox`` as ``[x, y, width, height]`` in pixels.
"""

import json
import logging
import math
from collections import defaultdict
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as PydanticValidationError

from ..common.errors import DomainError, ValidationError

logger = logging.getLogger(__name__)

BBox = Tuple[float, float, float, float]

DEFAULT_SCORE_THRESHOLD = 0.3


class Detection(BaseModel):
    """One detector output record."""

    model_config = ConfigDict(extra="ignore", frozen=True)

    image_id: int
    category_id: int
    bbox: BBox
    score: float = Field(..., ge=0.0, le=1.0)

    @field_validator("bbox")
    @classmethod
    def _positive_extent(cls, bbox: BBox) -> BBox:
        if not all(math.isfinite(v) for v in bbox):
            raise ValueError(f"box coordinates must be finite, got {list(bbox)}")
        if bbox[2] <= 0 or bbox[3] <= 0:
            raise ValueError(f"box width and height must be positive, got {bbox[2]} x {bbox[3]}")
        return bbox

    @property
    def area(self) -> float:
        return self.bbox[2] * self.bbox[3]


class DetectionSet:
    """Detections grouped by image; score thresholds apply at query time."""

    def __init__(self, detections: Iterable[Detection] = ()):
        self.detections: List[Detection] = list(detections)
        self._by_image: Dict[int, List[Detection]] = defaultdict(list)
        for detection in self.detections:
            self._by_image[detection.image_id].append(detection)

    def __len__(self) -> int:
        return len(self.detections)

    def __iter__(self) -> Iterator[Detection]:
        return iter(self.detections)

    def image_ids(self) -> List[int]:
        return sorted(self._by_image)

    def categories(self) -> List[int]:
        return sorted({detection.category_id for detection in self.detections})

    def for_image(self, image_id: int, threshold: float = 0.0) -> List[Detection]:
        return [d for d in self._by_image.get(image_id, []) if d.score >= threshold]

    def above(self, threshold: float) -> "DetectionSet":
        return DetectionSet(d for d in self.detections if d.score >= threshold)

    def restrict(self, image_ids: Iterable[int]) -> "DetectionSet":
        keep = set(image_ids)
        return DetectionSet(d for d in self.detections if d.image_id in keep)

    def grouped(self) -> Dict[int, List[Detection]]:
        return {image_id: list(items) for image_id, items in self._by_image.items()}


def parse_detections(json_bytes: Union[bytes, str]) -> DetectionSet:
    """Validate a results dump; every bad record index is reported at once."""
    try:
        payload = json.loads(json_bytes)
    except json.JSONDecodeError as e:
        raise ValidationError(
            f"Malformed JSON: {e.msg}", offending=[f"line {e.lineno} column {e.colno}"]
        ) from e
    except UnicodeDecodeError as e:
        raise ValidationError(f"Detection dump is not UTF-8 text: {e}") from e
    if not isinstance(payload, list):
        raise ValidationError("Detection dump must be a JSON array of records")

    detections: List[Detection] = []
    offending: List[int] = []
    for index, record in enumerate(payload):
        try:
            detections.append(Detection.model_validate(record))
        except PydanticValidationError as e:
            logger.debug(f"Record {index} rejected: {e.errors()[0]['msg']}")
            offending.append(index)
    if offending:
        raise ValidationError("Invalid detection records", offending=offending)
    logger.debug(f"Parsed {len(detections)} detections")
    return DetectionSet(detections)


def serialize_detections(detections: DetectionSet) -> bytes:
    """Inverse of ``parse_detections``; records keep their input order."""
    records = [detection.model_dump(mode="json") for detection in detections]
    return json.dumps(records, indent=2).encode("utf-8")


def count_bboxes(detections: DetectionSet, threshold: float = DEFAULT_SCORE_THRESHOLD) -> int:
    """Number of detections scoring at least ``threshold``."""
    if not (0.0 <= threshold <= 1.0):
        raise DomainError(f"Score threshold must lie in [0, 1], got {threshold}")
    return sum(1 for detection in detections if detection.score >= threshold)


def align_image_spaces(
    origin: DetectionSet, adversarial: DetectionSet, known: Optional[Sequence[int]] = None
) -> Tuple[DetectionSet, DetectionSet, List[int]]:
    """Restrict both dumps to the image ids they share.

    ``known`` adds images (typically every ground-truth image) that count as
    shared even when one dump has no detection on them. Returns the orphan ids
    that were dropped.
    """
    origin_ids: Set[int] = set(origin.image_ids())
    adv_ids: Set[int] = set(adversarial.image_ids())
    shared = (origin_ids & adv_ids) | set(known or [])
    orphans = sorted((origin_ids | adv_ids) - shared)
    if orphans:
        logger.warning(f"Image ids present in only one dump, ignored: {orphans}")
    return origin.restrict(shared), adversarial.restrict(shared), orphans

