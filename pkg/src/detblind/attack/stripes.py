"""Stripe masks selecting thin column or row bands of an image."""

import logging
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..common.errors import DomainError

logger = logging.getLogger(__name__)

Dims = Tuple[int, int, int]

DEFAULT_THICKNESS = 1
DEFAULT_LENGTH = 10


class StripeMask(BaseModel):
    """Bands starting at ``offsets`` along one axis.

    Vertical masks select columns ``[s, s + band_length)``; horizontal masks
    select rows ``[s, s + band_thickness)``. Bands are clipped at the edge.
    """

    model_config = ConfigDict(frozen=True)

    orientation: Literal["vertical", "horizontal"]
    band_thickness: int = Field(..., ge=1)
    band_length: int = Field(..., ge=1)
    stride: int = Field(..., ge=1)
    offsets: Tuple[int, ...]
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    channels: int = Field(3, ge=1)

    @model_validator(mode="after")
    def _check_offsets(self) -> "StripeMask":
        extent = self.width if self.orientation == "vertical" else self.height
        offsets = list(self.offsets)
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ValueError("Stripe offsets must be strictly increasing")
        if any(not (0 <= s < extent) for s in offsets):
            raise ValueError(f"Stripe offsets must lie in [0, {extent})")
        if any(b - a < self.band for a, b in zip(offsets, offsets[1:])):
            raise ValueError("Adjacent stripes overlap")
        return self

    @property
    def band(self) -> int:
        """Band size across the stripe axis."""
        return self.band_length if self.orientation == "vertical" else self.band_thickness

    @property
    def dims(self) -> Dims:
        return (self.width, self.height, self.channels)

    def active(self) -> np.ndarray:
        """``(h, w)`` bool grid of covered pixels."""
        grid = np.zeros((self.height, self.width), dtype=bool)
        for s in self.offsets:
            if self.orientation == "vertical":
                grid[:, s : s + self.band] = True
            else:
                grid[s : s + self.band, :] = True
        return grid

    def covered(self) -> int:
        """Number of covered columns (vertical) or rows (horizontal)."""
        extent = self.width if self.orientation == "vertical" else self.height
        return sum(min(s + self.band, extent) - s for s in self.offsets)


def _offsets(extent: int, stride: int) -> Tuple[int, ...]:
    return tuple(range(0, extent, stride))


def build_stripe_masks(
    dims: Dims,
    n: int = DEFAULT_THICKNESS,
    m: int = DEFAULT_LENGTH,
    stride: Optional[int] = None,
    horizontal_stride: Optional[int] = None,
) -> Tuple[StripeMask, StripeMask]:
    """Vertical ``m``-column and horizontal ``n``-row stripe masks.

    ``stride`` spaces vertical bands (default ``2 * m``); ``horizontal_stride``
    spaces horizontal bands (default ``2 * n``).
    """
    width, height, channels = dims
    if n < 1 or m < 1:
        raise DomainError(f"Band sizes must be positive, got n={n} m={m}")
    stride = 2 * m if stride is None else stride
    horizontal_stride = 2 * n if horizontal_stride is None else horizontal_stride
    if stride < m:
        raise DomainError(f"Overlapping stripes: stride {stride} < band length {m}")
    if horizontal_stride < n:
        raise DomainError(f"Overlapping stripes: horizontal stride {horizontal_stride} < band thickness {n}")

    common = dict(band_thickness=n, band_length=m, width=width, height=height, channels=channels)
    vertical = StripeMask(orientation="vertical", stride=stride, offsets=_offsets(width, stride), **common)
    horizontal = StripeMask(
        orientation="horizontal",
        stride=horizontal_stride,
        offsets=_offsets(height, horizontal_stride),
        **common,
    )
    logger.debug(
        f"Stripe masks on {width}x{height}: {len(vertical.offsets)} vertical, {len(horizontal.offsets)} horizontal"
    )
    return vertical, horizontal


def whole_object_masks(dims: Dims) -> Tuple[StripeMask, StripeMask]:
    """Full-cover masks (band = stride = image extent) for whole-object perturbation."""
    width, height, _ = dims
    return build_stripe_masks(dims, n=height, m=width, stride=width, horizontal_stride=height)


def union_active(masks: Tuple[StripeMask, StripeMask]) -> np.ndarray:
    first, second = masks
    if (first.width, first.height) != (second.width, second.height):
        raise DomainError("Stripe masks cover different image dims")
    return first.active() | second.active()
