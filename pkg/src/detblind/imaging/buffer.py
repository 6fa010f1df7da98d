"""Immutable image buffers.

Pixels are stored as float64 in [0, 1], shaped ``(height, width, channels)``
(row-major, channel-interleaved). Quantization to 8 bits happens only at file
I/O.
"""

import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..common.errors import DomainError

logger = logging.getLogger(__name__)

SUPPORTED_CHANNELS = (1, 3)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """An image X, a sample S or an adversarial example X_adv."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise DomainError(f"Image data must be 2-D or 3-D, got shape {data.shape}")
        height, width, channels = data.shape
        if width < 1 or height < 1:
            raise DomainError(f"Image dims must be at least 1x1, got {width}x{height}")
        if channels not in SUPPORTED_CHANNELS:
            raise DomainError(f"Only 1 or 3 channels are supported, got {channels}")
        if not np.all(np.isfinite(data)):
            raise DomainError("Image contains non-finite pixel values")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise DomainError("Pixel values must lie in [0, 1]; use ImageBuffer.from_array(clamp=True)")
        data = np.array(data, dtype=np.float64, copy=True)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, array: np.ndarray, clamp: bool = True) -> "ImageBuffer":
        """Build from any real array; values are clamped to [0, 1] on write-back."""
        array = np.asarray(array, dtype=np.float64)
        if clamp:
            array = np.clip(array, 0.0, 1.0)
        return cls(array)

    @classmethod
    def zeros(cls, width: int, height: int, channels: int = 3) -> "ImageBuffer":
        return cls(np.zeros((height, width, channels)))

    @classmethod
    def filled(cls, width: int, height: int, value: float, channels: int = 3) -> "ImageBuffer":
        return cls(np.full((height, width, channels), float(value)))

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def channels(self) -> int:
        return int(self.data.shape[2])

    @property
    def dims(self) -> Tuple[int, int, int]:
        """``(w, h, c)``."""
        return (self.width, self.height, self.channels)

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Array shape ``(h, w, c)``."""
        return (self.height, self.width, self.channels)

    @property
    def pixels(self) -> np.ndarray:
        """Flat row-major, channel-interleaved view of length w*h*c."""
        return self.data.reshape(-1)

    def as_array(self) -> np.ndarray:
        """Writable float64 copy shaped ``(h, w, c)``."""
        return np.array(self.data, copy=True)

    def pixel(self, row: int, col: int) -> np.ndarray:
        return self.data[row, col]

    def with_pixels(self, array: np.ndarray) -> "ImageBuffer":
        """New buffer of the same shape with clamped replacement values."""
        array = np.asarray(array, dtype=np.float64)
        if array.shape != self.data.shape:
            raise DomainError(f"Shape mismatch: {array.shape} vs {self.data.shape}")
        return ImageBuffer.from_array(array)

    def to_uint8(self) -> np.ndarray:
        return np.rint(self.data * 255.0).astype(np.uint8)

    def same_dims(self, other: "ImageBuffer") -> bool:
        return self.data.shape == other.data.shape

    def equals(self, other: "ImageBuffer") -> bool:
        """Bit-exact comparison."""
        return self.same_dims(other) and bool(np.array_equal(self.data, other.data))


@dataclass(frozen=True)
class CornerQuad:
    """Four known samples Q11=(a1,b1), Q12=(a1,b2), Q21=(a2,b1), Q22=(a2,b2)."""

    a1: float
    a2: float
    b1: float
    b2: float
    f11: float
    f12: float
    f21: float
    f22: float

    def __post_init__(self) -> None:
        if not (self.a1 < self.a2 and self.b1 < self.b2):
            raise DomainError(
                f"Degenerate quad: need a1 < a2 and b1 < b2, got a=({self.a1}, {self.a2}) b=({self.b1}, {self.b2})"
            )

    def contains(self, a: float, b: float) -> bool:
        return self.a1 <= a <= self.a2 and self.b1 <= b <= self.b2
