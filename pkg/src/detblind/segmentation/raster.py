"""Even-odd scanline polygon fill with the pixel-center inclusion rule.

Pixel ``(row, col)`` is inside when its center ``(col + 0.5, row + 0.5)``
has an odd number of polygon-edge crossings strictly to its right. An edge
crosses a scanline ``y`` when exactly one endpoint lies strictly below ``y``.
"""

import logging
from typing import Sequence, Tuple

import numpy as np

from ..common.errors import DomainError

logger = logging.getLogger(__name__)


def edge_crossings(polygon: np.ndarray, y: float) -> np.ndarray:
    """Sorted x positions where the closed polygon crosses the line ``y``."""
    xs = polygon[:, 0]
    ys = polygon[:, 1]
    xj = np.roll(xs, -1)
    yj = np.roll(ys, -1)
    crosses = (ys > y) != (yj > y)
    if not crosses.any():
        return np.empty(0, dtype=np.float64)
    xi, yi = xs[crosses], ys[crosses]
    xk, yk = xj[crosses], yj[crosses]
    return np.sort(xi + (y - yi) * (xk - xi) / (yk - yi))


def rasterize_polygon(polygon: Sequence[Tuple[float, float]], width: int, height: int) -> np.ndarray:
    """Fill a polygon given as ``(x, y)`` vertices; returns an ``(h, w)`` bool grid.

    The result is clipped to the image bounds.
    """
    vertices = np.asarray(polygon, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 3:
        raise DomainError(f"Polygon needs at least 3 (x, y) vertices, got {len(vertices)}")
    if width < 1 or height < 1:
        raise DomainError(f"Raster dims must be positive, got {width}x{height}")

    grid = np.zeros((height, width), dtype=bool)
    centers_x = np.arange(width, dtype=np.float64) + 0.5
    row_lo = max(0, int(np.floor(vertices[:, 1].min())) - 1)
    row_hi = min(height, int(np.ceil(vertices[:, 1].max())) + 1)
    for row in range(row_lo, row_hi):
        crossings = edge_crossings(vertices, row + 0.5)
        if crossings.size == 0:
            continue
        # crossings strictly right of each center = n - (# crossings <= center)
        right = crossings.size - np.searchsorted(crossings, centers_x, side="right")
        grid[row] = (right % 2) == 1
    return grid


def rasterize_polygons(polygons: Sequence[Sequence[Tuple[float, float]]], width: int, height: int) -> np.ndarray:
    """Union of several polygons belonging to one annotation."""
    grid = np.zeros((height, width), dtype=bool)
    for polygon in polygons:
        if len(polygon) < 3:
            logger.warning(f"Skipping degenerate polygon with {len(polygon)} vertices")
            continue
        grid |= rasterize_polygon(polygon, width, height)
    return grid
