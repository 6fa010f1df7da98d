"""COCO annotation parsing, polygon rasterization and target localization."""

from .coco import (
    CocoAnnotation,
    CocoCategory,
    CocoDocument,
    CocoImage,
    GroundTruthBox,
    PolygonAnnotation,
    ground_truth_boxes,
    load_coco_document,
    parse_coco_annotations,
    polygon_index,
    serialize_coco_annotations,
)
from .masks import (
    DEFAULT_PALETTE_SIZE,
    SegmentationMask,
    TargetRegion,
    build_mask_from_annotations,
    decode_painted_mask,
    default_palette,
    locate_instances,
    locate_target,
    locate_target_by_color,
    paint_mask,
    validate_palette,
)
from .raster import rasterize_polygon, rasterize_polygons

__all__ = [
    # COCO documents
    "CocoImage",
    "CocoCategory",
    "CocoAnnotation",
    "CocoDocument",
    "PolygonAnnotation",
    "GroundTruthBox",
    "load_coco_document",
    "parse_coco_annotations",
    "polygon_index",
    "serialize_coco_annotations",
    "ground_truth_boxes",

    # Rasterization
    "rasterize_polygon",
    "rasterize_polygons",

    # Masks and regions
    "SegmentationMask",
    "TargetRegion",
    "default_palette",
    "validate_palette",
    "DEFAULT_PALETTE_SIZE",
    "paint_mask",
    "decode_painted_mask",
    "locate_target",
    "locate_target_by_color",
    "locate_instances",
    "build_mask_from_annotations",
]
