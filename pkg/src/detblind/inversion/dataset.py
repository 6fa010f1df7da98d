"""Synthetic 3-class shape images for the toy classifier.

Class 0 is a filled square, class 1 an anti-aliased disk, class 2 full-height
vertical stripes. Each sample gets its own random color on a black
background.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from ..common.errors import DomainError

logger = logging.getLogger(__name__)

CLASS_NAMES = ("square", "disk", "stripes")
IMAGE_SIZE = 16
SQUARE_SIDES = (6, 10)
DISK_RADII = (4.0, 6.0)
STRIPE_PERIODS = (3, 6)
COLOR_RANGE = (0.4, 1.0)


def _color(rng: np.random.Generator, channels: int) -> np.ndarray:
    return rng.uniform(*COLOR_RANGE, size=channels)


def draw_square(rng: np.random.Generator, size: int = IMAGE_SIZE, channels: int = 3) -> np.ndarray:
    side = int(rng.integers(SQUARE_SIDES[0], min(SQUARE_SIDES[1], size) + 1))
    top = int(rng.integers(0, size - side + 1))
    left = int(rng.integers(0, size - side + 1))
    image = np.zeros((size, size, channels))
    image[top : top + side, left : left + side] = _color(rng, channels)
    return image


def draw_disk(rng: np.random.Generator, size: int = IMAGE_SIZE, channels: int = 3) -> np.ndarray:
    radius = float(rng.uniform(*DISK_RADII))
    cy = float(rng.uniform(radius, size - radius))
    cx = float(rng.uniform(radius, size - radius))
    rows, cols = np.mgrid[0:size, 0:size] + 0.5
    distance = np.hypot(rows - cy, cols - cx)
    coverage = np.clip(radius + 0.5 - distance, 0.0, 1.0)
    return coverage[:, :, None] * _color(rng, channels)


def draw_stripes(rng: np.random.Generator, size: int = IMAGE_SIZE, channels: int = 3) -> np.ndarray:
    period = int(rng.integers(STRIPE_PERIODS[0], STRIPE_PERIODS[1] + 1))
    width = int(rng.integers(1, period))
    phase = int(rng.integers(0, period))
    on = ((np.arange(size) + phase) % period) < width
    image = np.zeros((size, size, channels))
    image[:, on] = _color(rng, channels)
    return image


_DRAWERS = (draw_square, draw_disk, draw_stripes)


def synthetic_shapes_dataset(
    samples_per_class: int,
    rng: Optional[np.random.Generator] = None,
    size: int = IMAGE_SIZE,
    channels: int = 3,
) -> Tuple[np.ndarray, np.ndarray]:
    """``(images, labels)`` with images shaped ``(n, size, size, channels)``, classes interleaved."""
    if samples_per_class < 1:
        raise DomainError(f"samples_per_class must be positive, got {samples_per_class}")
    if size < SQUARE_SIDES[1] or size < 2 * DISK_RADII[1]:
        raise DomainError(f"Image size {size} is too small for the shape generators")
    rng = rng if rng is not None else np.random.default_rng(0)
    images = []
    labels = []
    for _ in range(samples_per_class):
        for label, draw in enumerate(_DRAWERS):
            images.append(draw(rng, size, channels))
            labels.append(label)
    logger.debug(f"Generated {len(images)} synthetic shapes")
    return np.clip(np.stack(images), 0.0, 1.0), np.asarray(labels, dtype=np.intp)
