"""Segmentation masks, palette painting and target localization.

A ``SegmentationMask`` is a class-id grid plus an injective palette. Masks
come either from COCO polygons (``build_mask_from_annotations``) or from a
pre-painted PNG (``decode_painted_mask``); both feed ``locate_target``.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..common.errors import DomainError, TargetNotFoundError
from ..imaging.buffer import ImageBuffer
from .coco import CocoImage, PolygonAnnotation
from .raster import rasterize_polygons

logger = logging.getLogger(__name__)

RGB = Tuple[int, int, int]
BBoxTBLR = Tuple[int, int, int, int]

VOC_CLASS_COUNT = 21
# covers every COCO category id
DEFAULT_PALETTE_SIZE = 256
BLACK: RGB = (0, 0, 0)


def default_palette(count: int = VOC_CLASS_COUNT) -> Dict[int, RGB]:
    """VOC colormap for ids ``0 .. count-1``.

    Each id's bits are interleaved into the high bits of R, G and B, which
    keeps the map injective for every id below 2**24.
    """
    if count < 1:
        raise DomainError(f"Palette size must be positive, got {count}")
    palette: Dict[int, RGB] = {}
    for class_id in range(count):
        r = g = b = 0
        c = class_id
        for j in range(8):
            r |= ((c >> 0) & 1) << (7 - j)
            g |= ((c >> 1) & 1) << (7 - j)
            b |= ((c >> 2) & 1) << (7 - j)
            c >>= 3
        palette[class_id] = (r, g, b)
    return palette


def validate_palette(palette: Mapping[int, Sequence[int]]) -> Dict[int, RGB]:
    """Normalize a palette to int keys and RGB triples, rejecting collisions and non-8-bit colors."""
    normalized: Dict[int, RGB] = {}
    for class_id, rgb in palette.items():
        color = tuple(int(v) for v in rgb)
        if int(class_id) < 0:
            raise DomainError(f"Palette class ids must be non-negative, got {class_id}")
        if len(color) != 3 or any(not 0 <= v <= 255 for v in color):
            raise DomainError(f"Palette color for class {class_id} must be three 8-bit values, got {color}")
        normalized[int(class_id)] = color  # type: ignore[assignment]
    colors = [rgb for k, rgb in normalized.items() if k != 0]
    if len(set(colors)) != len(colors):
        raise DomainError("Palette must map distinct classes to distinct colors")
    if BLACK in colors:
        raise DomainError("Black is reserved for background")
    return normalized


def _pack(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.int64)
    return (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]


@dataclass(frozen=True, eq=False)
class SegmentationMask:
    """Class-id grid (0 = background) with its palette."""

    class_ids: np.ndarray = field(repr=False)
    palette: Mapping[int, RGB] = field(repr=False)

    def __post_init__(self) -> None:
        grid = np.asarray(self.class_ids)
        if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
            raise DomainError(f"Class-id grid must be a non-empty 2-D array, got {grid.shape}")
        if grid.size and grid.min() < 0:
            raise DomainError("Class ids must be non-negative")
        grid = np.array(grid, dtype=np.int64, copy=True)
        grid.setflags(write=False)

        palette = validate_palette(self.palette)
        missing = sorted(set(int(v) for v in np.unique(grid)) - {0} - set(palette))
        if missing:
            raise DomainError(f"Class ids without a palette entry: {missing}")

        object.__setattr__(self, "class_ids", grid)
        object.__setattr__(self, "palette", palette)

    @property
    def width(self) -> int:
        return int(self.class_ids.shape[1])

    @property
    def height(self) -> int:
        return int(self.class_ids.shape[0])

    def labels(self) -> List[int]:
        """Non-background labels present in the grid."""
        return [int(v) for v in np.unique(self.class_ids) if v != 0]


@dataclass(frozen=True, eq=False)
class TargetRegion:
    """A located object: label, pixel bitmask and tight ``(t, b, l, r)`` box."""

    label: int
    pixel_mask: np.ndarray = field(repr=False)
    bbox: BBoxTBLR

    def __post_init__(self) -> None:
        bits = np.array(self.pixel_mask, dtype=bool, copy=True)
        if bits.ndim != 2:
            raise DomainError(f"Pixel mask must be 2-D, got {bits.shape}")
        if not bits.any():
            raise DomainError("Target region must contain at least one pixel")
        if tuple(self.bbox) != _tight_bbox(bits):
            raise DomainError(f"bbox {self.bbox} is not the tight box {_tight_bbox(bits)}")
        bits.setflags(write=False)
        object.__setattr__(self, "pixel_mask", bits)
        object.__setattr__(self, "bbox", tuple(int(v) for v in self.bbox))

    @classmethod
    def from_mask(cls, label: int, pixel_mask: np.ndarray) -> "TargetRegion":
        bits = np.asarray(pixel_mask, dtype=bool)
        if not bits.any():
            raise DomainError("Target region must contain at least one pixel")
        return cls(label=int(label), pixel_mask=bits, bbox=_tight_bbox(bits))

    @property
    def top(self) -> int:
        return self.bbox[0]

    @property
    def bottom(self) -> int:
        return self.bbox[1]

    @property
    def left(self) -> int:
        return self.bbox[2]

    @property
    def right(self) -> int:
        return self.bbox[3]

    @property
    def pixel_count(self) -> int:
        return int(self.pixel_mask.sum())

    def pixel_indices(self) -> np.ndarray:
        """Flat ``row * width + col`` indices in row-major scan order."""
        return np.flatnonzero(self.pixel_mask)

    def xywh(self) -> Tuple[float, float, float, float]:
        """Box in COCO ``(x, y, width, height)`` pixel units."""
        return (float(self.left), float(self.top), float(self.right - self.left + 1), float(self.bottom - self.top + 1))

    def to_dict(self) -> Dict[str, object]:
        return {"label": self.label, "bbox": list(self.bbox), "pixel_count": self.pixel_count}


def _tight_bbox(bits: np.ndarray) -> BBoxTBLR:
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if rows.size == 0:
        raise DomainError("Empty pixel mask has no bounding box")
    return (int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1]))


def paint_mask(mask: SegmentationMask) -> ImageBuffer:
    """RGB image with each pixel in its class color; background is black."""
    ids = sorted(mask.palette)
    lut = np.zeros((max(ids + [0]) + 1, 3), dtype=np.float64)
    for class_id in ids:
        if class_id != 0:
            lut[class_id] = mask.palette[class_id]
    return ImageBuffer(lut[mask.class_ids] / 255.0)


def decode_painted_mask(img: ImageBuffer, palette: Optional[Mapping[int, RGB]] = None) -> SegmentationMask:
    """Recover class ids from a painted image by exact 8-bit color match.

    Colors outside the palette decode as background and are counted in a
    warning.
    """
    if img.channels != 3:
        raise DomainError(f"Painted masks must be RGB, got {img.channels} channel(s)")
    palette = dict(palette) if palette is not None else default_palette(DEFAULT_PALETTE_SIZE)
    entries = sorted((_pack(np.asarray(rgb)), class_id) for class_id, rgb in palette.items() if class_id != 0)
    keys = np.asarray([key for key, _ in entries], dtype=np.int64)
    values = np.asarray([class_id for _, class_id in entries], dtype=np.int64)

    packed = _pack(img.to_uint8())
    grid = np.zeros(packed.shape, dtype=np.int64)
    if keys.size:
        pos = np.clip(np.searchsorted(keys, packed), 0, keys.size - 1)
        hit = keys[pos] == packed
        grid[hit] = values[pos[hit]]
    else:
        hit = np.zeros(packed.shape, dtype=bool)
    unknown = int(np.count_nonzero(~hit & (packed != 0)))
    if unknown:
        logger.warning(f"{unknown} pixels have colors outside the palette; treated as background")
    return SegmentationMask(class_ids=grid, palette=palette)


def locate_target(mask: SegmentationMask, label: int) -> TargetRegion:
    """All pixels of ``label`` as a single region (disconnected parts included)."""
    if label <= 0:
        raise DomainError(f"Target label must be a non-background class id, got {label}")
    bits = mask.class_ids == label
    if not bits.any():
        raise TargetNotFoundError(f"target not found: label {label} is absent from the mask")
    region = TargetRegion.from_mask(label, bits)
    logger.debug(f"Located label {label}: {region.pixel_count} pixels, bbox {region.bbox}")
    return region


def locate_target_by_color(
    painted: ImageBuffer, rgb: Sequence[int], palette: Optional[Mapping[int, RGB]] = None
) -> TargetRegion:
    """Locate the pixels painted exactly in ``rgb``; the label comes from the palette."""
    palette = dict(palette) if palette is not None else default_palette(DEFAULT_PALETTE_SIZE)
    color = tuple(int(v) for v in rgb)
    labels = [class_id for class_id, entry in palette.items() if tuple(entry) == color and class_id != 0]
    if not labels:
        raise DomainError(f"Color {color} is not a class color of the palette")
    if painted.channels != 3:
        raise DomainError(f"Painted masks must be RGB, got {painted.channels} channel(s)")
    bits = np.all(painted.to_uint8() == np.asarray(color, dtype=np.uint8), axis=2)
    if not bits.any():
        raise TargetNotFoundError(f"target not found: no pixels painted {color}")
    return TargetRegion.from_mask(labels[0], bits)


def locate_instances(mask: SegmentationMask, label: int) -> List[TargetRegion]:
    """Split ``label`` into 4-connected components, ordered by ``(t, l)``."""
    whole = locate_target(mask, label)
    rows, cols = np.nonzero(whole.pixel_mask)
    graph = nx.Graph()
    graph.add_nodes_from(zip(rows.tolist(), cols.tolist()))
    for row, col in zip(rows.tolist(), cols.tolist()):
        for neighbor in ((row + 1, col), (row, col + 1)):
            if neighbor in graph:
                graph.add_edge((row, col), neighbor)

    regions = []
    for component in nx.connected_components(graph):
        bits = np.zeros(whole.pixel_mask.shape, dtype=bool)
        comp_rows, comp_cols = zip(*component)
        bits[list(comp_rows), list(comp_cols)] = True
        regions.append(TargetRegion.from_mask(label, bits))
    regions.sort(key=lambda region: (region.top, region.left))
    logger.debug(f"Label {label} splits into {len(regions)} instances")
    return regions


def build_mask_from_annotations(
    image: CocoImage,
    annotations: Sequence[PolygonAnnotation],
    palette: Optional[Mapping[int, RGB]] = None,
) -> SegmentationMask:
    """Rasterize an image's polygon annotations; later annotations paint over earlier ones."""
    grid = np.zeros((image.height, image.width), dtype=np.int64)
    for annotation in annotations:
        bits = rasterize_polygons(annotation.polygons, image.width, image.height)
        grid[bits] = annotation.category_id
    if palette is None:
        palette = default_palette(max(VOC_CLASS_COUNT, int(grid.max(initial=0)) + 1))
    logger.debug(f"Built mask for image {image.id} from {len(annotations)} annotations")
    return SegmentationMask(class_ids=grid, palette=palette)
