"""Valid-padding 2-D convolution (cross-correlation form).

``output[i, j] = sum_{di, dj < k} input[s*i + di, s*j + dj] * kernel[di, dj]``,
summed over channels. Outputs are unclamped feature maps, not images.
"""

import logging
from typing import Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..common.errors import DomainError
from .buffer import ImageBuffer

logger = logging.getLogger(__name__)

ArrayOrImage = Union[ImageBuffer, np.ndarray]


def _as_hwc(input: ArrayOrImage) -> np.ndarray:
    data = input.data if isinstance(input, ImageBuffer) else np.asarray(input, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.ndim != 3:
        raise DomainError(f"Convolution input must be (h, w) or (h, w, c), got {data.shape}")
    return data


def output_size(dim: int, k: int, stride: int) -> int:
    return (dim - k) // stride + 1


def extract_windows(batch: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Sliding k x k windows of a ``(n, h, w, c)`` batch.

    Returns a read-only view shaped ``(n, oh, ow, c, k, k)``.
    """
    windows = sliding_window_view(batch, (k, k), axis=(1, 2))
    return windows[:, ::stride, ::stride]


def _check_geometry(height: int, width: int, k: int, stride: int) -> None:
    if k < 1:
        raise DomainError(f"Kernel size must be positive, got {k}")
    if stride < 1:
        raise DomainError(f"Stride must be a positive integer, got {stride}")
    if k > min(height, width):
        raise DomainError(f"Kernel {k}x{k} larger than input {width}x{height}")


def conv2d_bank(batch: np.ndarray, kernels: np.ndarray, stride: int = 1) -> np.ndarray:
    """Convolve a batch with a bank of filters.

    ``batch`` is ``(n, h, w, c)``, ``kernels`` is ``(f, c, k, k)``; the result is
    ``(n, oh, ow, f)``.
    """
    n, height, width, channels = batch.shape
    f, kc, k, k2 = kernels.shape
    if k != k2:
        raise DomainError(f"Kernels must be square, got {k}x{k2}")
    if kc != channels:
        raise DomainError(f"Kernel channels {kc} do not match input channels {channels}")
    _check_geometry(height, width, k, stride)
    windows = extract_windows(batch, k, stride)
    return np.einsum("nhwcij,fcij->nhwf", windows, kernels, optimize=True)


def conv2d_bank_input_grad(
    grad_out: np.ndarray, kernels: np.ndarray, input_shape: Tuple[int, int, int, int], stride: int = 1
) -> np.ndarray:
    """Gradient of ``conv2d_bank`` w.r.t. its input, given ``dL/doutput``."""
    _, oh, ow, _ = grad_out.shape
    k = kernels.shape[-1]
    grad_in = np.zeros(input_shape, dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            # (n, oh, ow, f) x (f, c) -> (n, oh, ow, c)
            contrib = np.einsum("nhwf,fc->nhwc", grad_out, kernels[:, :, di, dj])
            grad_in[:, di : di + stride * oh : stride, dj : dj + stride * ow : stride, :] += contrib
    return grad_in


def conv2d_bank_kernel_grad(batch: np.ndarray, grad_out: np.ndarray, k: int, stride: int = 1) -> np.ndarray:
    """Gradient of ``conv2d_bank`` w.r.t. its kernels, shaped ``(f, c, k, k)``."""
    windows = extract_windows(batch, k, stride)
    return np.einsum("nhwcij,nhwf->fcij", windows, grad_out, optimize=True)


def conv2d(input: ArrayOrImage, kernel: np.ndarray, stride: int = 1) -> np.ndarray:
    """Single-kernel convolution of an image or array.

    ``kernel`` is ``(k, k)`` (shared by every channel) or ``(c, k, k)``. The
    result is a plain ``(oh, ow)`` float64 ndarray, not an ``ImageBuffer``,
    with ``o = floor((dim - k) / stride) + 1``. Responses are not clamped to
    ``[0, 1]``.
    """
    data = _as_hwc(input)
    kernel = np.asarray(kernel, dtype=np.float64)
    channels = data.shape[2]
    if kernel.ndim == 2:
        kernel = np.broadcast_to(kernel, (channels,) + kernel.shape)
    if kernel.ndim != 3 or kernel.shape[1] != kernel.shape[2]:
        raise DomainError(f"Kernel must be (k, k) or (c, k, k), got {kernel.shape}")
    if not isinstance(stride, (int, np.integer)):
        raise DomainError(f"Stride must be a positive integer, got {stride}")
    _check_geometry(data.shape[0], data.shape[1], kernel.shape[-1], int(stride))
    out = conv2d_bank(data[None], kernel[None], int(stride))
    return out[0, :, :, 0]
