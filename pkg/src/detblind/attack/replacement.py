"""Neighbor background pixel replacement.

A bounded fraction of target-region pixels is overwritten with the full
channel vector of the nearest background pixel. Nearness is Chebyshev
distance; ties go to the smallest ``(row, col)``.
"""

import logging
import math
from typing import List, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, Field, model_validator

from ..common.errors import DomainError, NoBackgroundError
from ..imaging.buffer import ImageBuffer
from ..segmentation.masks import TargetRegion

logger = logging.getLogger(__name__)

DEFAULT_STEP = 4
DEFAULT_EPSILON = 0.25

# Absorbs float error in epsilon * N so 0.25 * 100 truncates to 25, not 24.
_RATIO_SLACK = 1e-12


class ReplacementPlan(BaseModel):
    """Pairs ``(target_index, source_index)`` of flat row-major pixel indices."""

    step: int = Field(..., ge=1)
    epsilon: float = Field(..., gt=0.0, le=1.0)
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    region_size: int = Field(..., ge=1)
    label: int = 0
    pairs: List[Tuple[int, int]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_pairs(self) -> "ReplacementPlan":
        targets = [target for target, _ in self.pairs]
        if len(set(targets)) != len(targets):
            raise ValueError("Replacement targets must be distinct")
        if len(self.pairs) > self.epsilon * self.region_size + _RATIO_SLACK:
            raise ValueError(
                f"{len(self.pairs)} replacements exceed epsilon={self.epsilon} of {self.region_size} region pixels"
            )
        limit = self.width * self.height
        if any(not (0 <= index < limit) for pair in self.pairs for index in pair):
            raise ValueError(f"Pixel index outside a {self.width}x{self.height} image")
        return self

    @property
    def ratio(self) -> float:
        return len(self.pairs) / self.region_size

    @classmethod
    def empty(cls, width: int, height: int, region_size: int = 1) -> "ReplacementPlan":
        return cls(step=1, epsilon=1.0, width=width, height=height, region_size=region_size)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, payload: Union[str, bytes]) -> "ReplacementPlan":
        return cls.model_validate_json(payload)


def chebyshev_distance_to_background(region_mask: np.ndarray) -> np.ndarray:
    """Distance of every pixel to the nearest background pixel (0 on background).

    Computed by repeated 3x3 erosion; pixels beyond the image edge never count
    as background.
    """
    current = np.asarray(region_mask, dtype=bool)
    if current.all():
        raise NoBackgroundError("no background available: the target region covers the whole image")
    distance = np.zeros(current.shape, dtype=np.int64)
    ring = 0
    while current.any():
        ring += 1
        distance[current] = ring
        padded = np.pad(current, 1, mode="constant", constant_values=True)
        current = sliding_window_view(padded, (3, 3)).all(axis=(-2, -1))
    return distance


def nearest_background(region_mask: np.ndarray, distance: np.ndarray, row: int, col: int) -> Tuple[int, int]:
    """Lexicographically smallest background pixel at the minimal Chebyshev distance."""
    d = int(distance[row, col])
    height, width = region_mask.shape
    top, left = max(0, row - d), max(0, col - d)
    window = ~region_mask[top : min(height, row + d + 1), left : min(width, col + d + 1)]
    # Every background pixel in the window sits at exactly distance d; the
    # first one in row-major order is the (row, col) minimum.
    first = int(np.argmax(window))
    win_width = window.shape[1]
    return top + first // win_width, left + first % win_width


def plan_replacement(
    img: ImageBuffer,
    region: TargetRegion,
    step: int = DEFAULT_STEP,
    epsilon: float = DEFAULT_EPSILON,
) -> ReplacementPlan:
    """Select every ``step``-th region pixel (capped at ``epsilon`` of the region) and pair it with a source."""
    if not (0.0 < epsilon <= 1.0):
        raise DomainError(f"epsilon must lie in (0, 1], got {epsilon}")
    if not isinstance(step, (int, np.integer)) or step < 1:
        raise DomainError(f"step must be a positive integer, got {step}")
    if region.pixel_mask.shape != (img.height, img.width):
        raise DomainError(
            f"Region grid {region.pixel_mask.shape} does not match image {img.height}x{img.width}"
        )

    mask = region.pixel_mask
    distance = chebyshev_distance_to_background(mask)
    indices = region.pixel_indices()
    limit = math.floor(epsilon * indices.size + _RATIO_SLACK)
    selected = indices[:: int(step)][:limit]

    pairs = []
    for index in selected.tolist():
        row, col = divmod(index, img.width)
        src_row, src_col = nearest_background(mask, distance, row, col)
        pairs.append((index, src_row * img.width + src_col))

    plan = ReplacementPlan(
        step=int(step),
        epsilon=float(epsilon),
        width=img.width,
        height=img.height,
        region_size=int(indices.size),
        label=region.label,
        pairs=pairs,
    )
    logger.info(
        f"Planned {len(pairs)} replacements for label {region.label} "
        f"({plan.ratio:.3f} of {indices.size} region pixels)"
    )
    return plan


def apply_replacement(img: ImageBuffer, plan: Union[ReplacementPlan, Sequence[ReplacementPlan]]) -> ImageBuffer:
    """Copy each source pixel's channel vector onto its target; plans apply in order."""
    plans = [plan] if isinstance(plan, ReplacementPlan) else list(plan)
    flat = img.as_array().reshape(img.width * img.height, img.channels)
    for current in plans:
        if (current.width, current.height) != (img.width, img.height):
            raise DomainError(
                f"Plan built for {current.width}x{current.height}, image is {img.width}x{img.height}"
            )
        if not current.pairs:
            continue
        pairs = np.asarray(current.pairs, dtype=np.intp)
        flat[pairs[:, 0]] = flat[pairs[:, 1]]
    return ImageBuffer(flat.reshape(img.shape))
