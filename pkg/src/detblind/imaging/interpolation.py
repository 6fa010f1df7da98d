"""Bilinear interpolation and align-corners resizing.

Interpolation is two linear steps, first along ``a`` (horizontal) then along
``b`` (vertical). Each step mixes with weights ``1 - t`` and ``t`` taken as
is; at ``t`` of 0 or 1 one weight vanishes, so corners and quad edges are
reproduced bit-exactly.
"""

import logging
from typing import Literal, Tuple

import numpy as np

from ..common.errors import DomainError
from .buffer import CornerQuad, ImageBuffer

logger = logging.getLogger(__name__)


def _lerp(f_lo: float, f_hi: float, t: float) -> float:
    return (1.0 - t) * f_lo + t * f_hi


def bilinear_interpolate(
    q: CornerQuad, a: float, b: float, order: Literal["ab", "ba"] = "ab"
) -> float:
    """Interpolate the quad's field at ``(a, b)``.

    ``order="ab"`` interpolates along ``a`` at ``b1`` and ``b2`` then along
    ``b``; ``order="ba"`` does the reverse. Both agree up to rounding.
    """
    if not q.contains(a, b):
        raise DomainError(
            f"Point ({a}, {b}) outside quad a=[{q.a1}, {q.a2}] b=[{q.b1}, {q.b2}]"
        )
    ta = (a - q.a1) / (q.a2 - q.a1)
    tb = (b - q.b1) / (q.b2 - q.b1)
    if order == "ab":
        f_at_b1 = _lerp(q.f11, q.f21, ta)
        f_at_b2 = _lerp(q.f12, q.f22, ta)
        return _lerp(f_at_b1, f_at_b2, tb)
    if order == "ba":
        f_at_a1 = _lerp(q.f11, q.f12, tb)
        f_at_a2 = _lerp(q.f21, q.f22, tb)
        return _lerp(f_at_a1, f_at_a2, ta)
    raise DomainError(f"Unknown interpolation order: {order}")


def source_coordinates(src_dim: int, dst_dim: int) -> np.ndarray:
    """Align-corners mapping ``src = dst * (src_dim - 1) / (dst_dim - 1)``."""
    if dst_dim == 1 or src_dim == 1:
        return np.zeros(dst_dim, dtype=np.float64)
    dst = np.arange(dst_dim, dtype=np.float64)
    return dst * (src_dim - 1) / (dst_dim - 1)


def bracket(coords: np.ndarray, src_dim: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower/upper sample indices and fractional weight for each coordinate.

    The lower index is capped at ``src_dim - 2`` so the last sample is reached
    with weight 1 instead of needing a degenerate bracket.
    """
    if src_dim == 1:
        zeros = np.zeros(coords.shape, dtype=np.intp)
        return zeros, zeros, np.zeros(coords.shape, dtype=np.float64)
    lo = np.minimum(np.floor(coords).astype(np.intp), src_dim - 2)
    hi = lo + 1
    return lo, hi, coords - lo


def bilinear_interpolate_batch(data: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample ``data`` (h, w, c) on the grid ``rows x cols`` with the ``ab`` order."""
    height, width = data.shape[:2]
    r0, r1, tb = bracket(rows, height)
    c0, c1, ta = bracket(cols, width)
    ta = ta[None, :, None]
    tb = tb[:, None, None]
    f11 = data[np.ix_(r0, c0)]
    f21 = data[np.ix_(r0, c1)]
    f12 = data[np.ix_(r1, c0)]
    f22 = data[np.ix_(r1, c1)]
    f_at_b1 = (1.0 - ta) * f11 + ta * f21
    f_at_b2 = (1.0 - ta) * f12 + ta * f22
    return (1.0 - tb) * f_at_b1 + tb * f_at_b2


def resize_bilinear(img: ImageBuffer, width: int, height: int) -> ImageBuffer:
    """Resize to ``width x height`` with align-corners bilinear sampling."""
    if width < 1 or height < 1:
        raise DomainError(f"Target dims must be positive, got {width}x{height}")
    rows = source_coordinates(img.height, height)
    cols = source_coordinates(img.width, width)
    out = bilinear_interpolate_batch(img.data, rows, cols)
    return ImageBuffer.from_array(out)


def upsample(img: ImageBuffer, factor: int) -> ImageBuffer:
    """Upsample by an integer factor; output is ``(w*factor) x (h*factor)``."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise DomainError(f"Upsampling factor must be a positive integer, got {factor}")
    if factor == 1:
        return ImageBuffer(img.data)
    logger.debug(f"Upsampling {img.width}x{img.height} by {factor}")
    return resize_bilinear(img, img.width * int(factor), img.height * int(factor))
