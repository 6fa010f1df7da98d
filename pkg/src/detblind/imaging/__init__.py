"""Image buffers, interpolation, convolution and image file I/O."""

from .buffer import CornerQuad, ImageBuffer
from .convolution import conv2d, conv2d_bank
from .interpolation import bilinear_interpolate, resize_bilinear, upsample
from .io import (
    decode_uint16_png,
    encode_class_map_pgm,
    encode_image,
    encode_uint16_png,
    load_image,
    save_class_map_pgm,
    save_image,
)

__all__ = [
    "ImageBuffer",
    "CornerQuad",
    "bilinear_interpolate",
    "upsample",
    "resize_bilinear",
    "conv2d",
    "conv2d_bank",
    "load_image",
    "save_image",
    "encode_image",
    "save_class_map_pgm",
    "encode_class_map_pgm",
    "encode_uint16_png",
    "decode_uint16_png",
]
