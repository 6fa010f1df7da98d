"""COCO annotation JSON: parsing, validation, serialization, ground truth.

Only the ``images`` / ``annotations`` / ``categories`` subset is modelled;
unknown fields are ignored. Polygon segmentation is decoded; RLE (crowd)
segmentation is reported as unsupported.
"""

import json
import logging
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from ..common.errors import AnnotationParseError, UnsupportedEncodingError, ValidationError

logger = logging.getLogger(__name__)

BBox = Tuple[float, float, float, float]
Point = Tuple[float, float]


class CocoImage(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: int
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    file_name: str = ""


class CocoCategory(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: int = Field(..., ge=1)
    name: str = ""
    supercategory: str = ""


class CocoAnnotation(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: int
    image_id: int
    category_id: int
    bbox: BBox
    area: Optional[float] = None
    iscrowd: int = 0
    segmentation: Union[List[List[float]], Dict[str, Any], None] = None

    @property
    def is_polygon(self) -> bool:
        return isinstance(self.segmentation, list)


class CocoDocument(BaseModel):
    """Validated annotation file."""

    model_config = ConfigDict(extra="ignore")

    images: List[CocoImage]
    annotations: List[CocoAnnotation]
    categories: List[CocoCategory]

    def image_by_id(self) -> Dict[int, CocoImage]:
        return {image.id: image for image in self.images}

    def image_by_file_name(self, file_name: str) -> Optional[CocoImage]:
        for image in self.images:
            if image.file_name == file_name:
                return image
        return None


class PolygonAnnotation(BaseModel):
    """One annotation with decoded polygon segmentation."""

    id: int
    category_id: int
    polygons: List[List[Point]]
    bbox: BBox
    area: Optional[float] = None


class GroundTruthBox(BaseModel):
    """Ground-truth box consumed by the evaluation harness."""

    category_id: int
    bbox: BBox
    area: Optional[float] = None


def _decode_json(json_bytes: Union[bytes, str]) -> Any:
    try:
        return json.loads(json_bytes)
    except json.JSONDecodeError as e:
        raise AnnotationParseError(f"Malformed JSON: {e.msg}", line=e.lineno, column=e.colno) from e
    except UnicodeDecodeError as e:
        raise AnnotationParseError(f"Input is not UTF-8 text: {e}") from e


def load_coco_document(json_bytes: Union[bytes, str]) -> CocoDocument:
    """Parse and validate an annotation file, resolving image joins."""
    payload = _decode_json(json_bytes)
    if not isinstance(payload, dict):
        raise ValidationError("Annotation document must be a JSON object")
    missing = [key for key in ("images", "annotations", "categories") if key not in payload]
    if missing:
        raise ValidationError("Annotation document is missing required arrays", offending=missing)
    try:
        document = CocoDocument.model_validate(payload)
    except PydanticValidationError as e:
        locations = [".".join(str(part) for part in err["loc"]) for err in e.errors()]
        raise ValidationError("Invalid annotation records", offending=locations) from e

    known_images = {image.id for image in document.images}
    orphans = sorted({ann.image_id for ann in document.annotations if ann.image_id not in known_images})
    if orphans:
        raise ValidationError("Annotations reference missing image ids", offending=orphans)
    return document


def _polygon_points(flat: List[float], annotation_id: int) -> List[Point]:
    if len(flat) % 2 != 0:
        raise ValidationError("Polygon has an odd number of coordinates", offending=[annotation_id])
    return [(float(flat[i]), float(flat[i + 1])) for i in range(0, len(flat), 2)]


def polygon_annotation(annotation: CocoAnnotation) -> PolygonAnnotation:
    if not annotation.is_polygon:
        raise UnsupportedEncodingError(
            f"unsupported segmentation encoding (RLE) in annotation {annotation.id}"
        )
    polygons = [_polygon_points(flat, annotation.id) for flat in annotation.segmentation or []]
    return PolygonAnnotation(
        id=annotation.id,
        category_id=annotation.category_id,
        polygons=polygons,
        bbox=annotation.bbox,
        area=annotation.area,
    )


def parse_coco_annotations(
    json_bytes: Union[bytes, str], on_rle: Literal["error", "skip"] = "error"
) -> Dict[int, List[PolygonAnnotation]]:
    """Map image id -> polygon annotations of that image."""
    document = load_coco_document(json_bytes)
    return polygon_index(document, on_rle=on_rle)


def polygon_index(
    document: CocoDocument, on_rle: Literal["error", "skip"] = "error"
) -> Dict[int, List[PolygonAnnotation]]:
    index: Dict[int, List[PolygonAnnotation]] = {}
    skipped = 0
    for annotation in document.annotations:
        if not annotation.is_polygon and on_rle == "skip":
            skipped += 1
            continue
        index.setdefault(annotation.image_id, []).append(polygon_annotation(annotation))
    if skipped:
        logger.warning(f"Skipped {skipped} RLE-encoded annotations")
    logger.debug(f"Parsed {sum(len(v) for v in index.values())} polygon annotations")
    return index


def serialize_coco_annotations(document: CocoDocument) -> bytes:
    """Inverse of ``load_coco_document`` for the modelled fields."""
    payload = document.model_dump(mode="json")
    return json.dumps(payload, indent=2, sort_keys=True).encode("utf-8")


def ground_truth_boxes(document: CocoDocument) -> Dict[int, List[GroundTruthBox]]:
    """Per-image ground-truth boxes; crowd annotations are left out."""
    boxes: Dict[int, List[GroundTruthBox]] = {image.id: [] for image in document.images}
    crowd = 0
    for annotation in document.annotations:
        if annotation.iscrowd:
            crowd += 1
            continue
        boxes[annotation.image_id].append(
            GroundTruthBox(category_id=annotation.category_id, bbox=annotation.bbox, area=annotation.area)
        )
    if crowd:
        logger.info(f"Excluded {crowd} crowd annotations from ground truth")
    return boxes
