"""Image file I/O: 8-bit PNG through Pillow, PPM/PGM (ASCII and binary).

Pixels are quantized to 8 bits on save (``round(v * 255)``) and scaled back
by ``1/maxval`` on load, so a save/load round trip is within 1/255 and a
load/save round trip is byte-stable.
"""

import io
import logging
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..common.errors import DomainError, ImageFormatError
from .buffer import ImageBuffer

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
NETPBM_CHANNELS = {b"P2": 1, b"P3": 3, b"P5": 1, b"P6": 3}
NETPBM_ASCII = {b"P2", b"P3"}
_WHITESPACE = b" \t\r\n\x0b\x0c"

PathLike = Union[str, Path]


def load_image(path: PathLike) -> ImageBuffer:
    """Read a PNG, PPM or PGM file into an ``ImageBuffer``."""
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(PNG_SIGNATURE):
        return decode_png(raw)
    if raw[:2] in NETPBM_CHANNELS:
        return decode_netpbm(raw)
    raise ImageFormatError(f"Unrecognized image format in {path}", offset=0)


def save_image(img: ImageBuffer, path: PathLike, ascii: bool = False) -> None:
    """Write by extension: ``.png``, ``.ppm`` (RGB) or ``.pgm`` (gray)."""
    path = Path(path)
    path.write_bytes(encode_image(img, path.suffix, ascii=ascii))


def encode_image(img: ImageBuffer, suffix: str, ascii: bool = False) -> bytes:
    """Encoded file bytes for an extension such as ``".png"``."""
    suffix = suffix.lower()
    if suffix == ".png":
        payload = encode_png(img)
    elif suffix in (".ppm", ".pgm", ".pnm"):
        expected = 3 if suffix == ".ppm" else 1 if suffix == ".pgm" else img.channels
        if img.channels != expected:
            raise DomainError(f"{suffix} requires {expected} channel(s), image has {img.channels}")
        payload = encode_netpbm(img, ascii=ascii)
    else:
        raise DomainError(f"Unsupported image extension: {suffix}")
    return payload


def encode_png(img: ImageBuffer) -> bytes:
    pixels = img.to_uint8()
    array = pixels[:, :, 0] if img.channels == 1 else pixels
    buffer = io.BytesIO()
    Image.fromarray(array).save(buffer, format="PNG")
    return buffer.getvalue()


def decode_png(raw: bytes) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(raw)) as image:
            mode = image.mode
            if mode not in ("L", "RGB", "P"):
                raise ImageFormatError(
                    f"Unsupported PNG mode {mode!r}: expected 8-bit gray or RGB without alpha", offset=24
                )
            if mode == "P":
                if "transparency" in image.info:
                    raise ImageFormatError("Palette PNG with transparency is not supported", offset=24)
                image = image.convert("RGB")
            image.load()
            array = np.asarray(image, dtype=np.uint8)
    except ImageFormatError:
        raise
    except (OSError, SyntaxError, UnidentifiedImageError) as e:
        raise ImageFormatError(f"Corrupt or truncated PNG: {e}", offset=len(raw)) from e
    return ImageBuffer(array.astype(np.float64) / 255.0)


class _TokenReader:
    """Whitespace/comment-aware token reader over a netpbm header or body."""

    def __init__(self, raw: bytes, pos: int = 0):
        self.raw = raw
        self.pos = pos

    def _skip(self) -> None:
        raw = self.raw
        while self.pos < len(raw):
            ch = raw[self.pos : self.pos + 1]
            if ch in (b"#",):
                newline = raw.find(b"\n", self.pos)
                self.pos = len(raw) if newline < 0 else newline + 1
            elif ch and ch in _WHITESPACE:
                self.pos += 1
            else:
                break

    def next_int(self, what: str) -> Tuple[int, int]:
        """Return ``(value, offset)`` of the next integer token."""
        self._skip()
        start = self.pos
        while self.pos < len(self.raw) and self.raw[self.pos : self.pos + 1].isdigit():
            self.pos += 1
        if start == self.pos:
            if start >= len(self.raw):
                raise ImageFormatError(f"Truncated file while reading {what}", offset=start)
            raise ImageFormatError(f"Expected integer for {what}", offset=start)
        return int(self.raw[start : self.pos]), start


def decode_netpbm(raw: bytes) -> ImageBuffer:
    magic = raw[:2]
    if magic not in NETPBM_CHANNELS:
        raise ImageFormatError(f"Unsupported netpbm magic {magic!r}", offset=0)
    channels = NETPBM_CHANNELS[magic]
    reader = _TokenReader(raw, 2)
    width, _ = reader.next_int("width")
    height, _ = reader.next_int("height")
    maxval, maxval_offset = reader.next_int("maxval")
    if width < 1 or height < 1:
        raise ImageFormatError(f"Invalid dims {width}x{height}", offset=2)
    if maxval < 1 or maxval > 255:
        raise ImageFormatError(f"Unsupported bit depth: maxval {maxval} (8-bit only)", offset=maxval_offset)
    count = width * height * channels

    if magic in NETPBM_ASCII:
        values: List[int] = []
        for _ in range(count):
            value, offset = reader.next_int("pixel data")
            if value > maxval:
                raise ImageFormatError(f"Sample {value} exceeds maxval {maxval}", offset=offset)
            values.append(value)
        samples = np.asarray(values, dtype=np.float64)
    else:
        # Exactly one whitespace byte separates the header from the raster.
        data_start = reader.pos + 1
        if reader.pos >= len(raw) or raw[reader.pos : reader.pos + 1] not in _WHITESPACE:
            raise ImageFormatError("Missing whitespace after maxval", offset=reader.pos)
        available = len(raw) - data_start
        if available < count:
            raise ImageFormatError(
                f"Truncated raster: expected {count} bytes, found {available}", offset=len(raw)
            )
        samples = np.frombuffer(raw, dtype=np.uint8, count=count, offset=data_start).astype(np.float64)
        if samples.max(initial=0) > maxval:
            bad = int(np.argmax(samples > maxval))
            raise ImageFormatError(f"Sample exceeds maxval {maxval}", offset=data_start + bad)

    return ImageBuffer(samples.reshape(height, width, channels) / float(maxval))


def encode_netpbm(img: ImageBuffer, ascii: bool = False) -> bytes:
    pixels = img.to_uint8()
    if img.channels == 3:
        magic = b"P3" if ascii else b"P6"
    else:
        magic = b"P2" if ascii else b"P5"
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    if not ascii:
        return header + pixels.tobytes()
    rows = []
    for row in pixels.reshape(img.height, -1):
        rows.append(" ".join(str(int(v)) for v in row))
    return header + ("\n".join(rows) + "\n").encode("ascii")


def save_class_map_pgm(class_ids: np.ndarray, path: PathLike) -> None:
    Path(path).write_bytes(encode_class_map_pgm(class_ids))


def encode_class_map_pgm(class_ids: np.ndarray) -> bytes:
    """Class-id grid as binary PGM (16-bit when any id exceeds 255)."""
    grid = np.asarray(class_ids)
    if grid.ndim != 2:
        raise DomainError(f"Class map must be 2-D, got {grid.shape}")
    if grid.size and grid.min() < 0:
        raise DomainError("Class ids must be non-negative")
    height, width = grid.shape
    top = int(grid.max(initial=0))
    if top <= 255:
        header = f"P5\n{width} {height}\n255\n".encode("ascii")
        body = grid.astype(np.uint8).tobytes()
    else:
        header = f"P5\n{width} {height}\n65535\n".encode("ascii")
        body = grid.astype(">u2").tobytes()
    return header + body


def encode_uint16_png(array: np.ndarray) -> bytes:
    """Encode a 2-D uint16 array as a 16-bit grayscale PNG."""
    grid = np.asarray(array, dtype=np.uint16)
    if grid.ndim != 2:
        raise DomainError(f"16-bit PNG payload must be 2-D, got {grid.shape}")
    buffer = io.BytesIO()
    Image.fromarray(grid).save(buffer, format="PNG")
    return buffer.getvalue()


def decode_uint16_png(raw: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(raw)) as image:
            image.load()
            if image.mode not in ("I;16", "I;16B", "I"):
                raise ImageFormatError(f"Expected a 16-bit grayscale PNG, got mode {image.mode!r}", offset=24)
            return np.asarray(image).astype(np.uint16)
    except ImageFormatError:
        raise
    except (OSError, SyntaxError, UnidentifiedImageError) as e:
        raise ImageFormatError(f"Corrupt 16-bit PNG: {e}", offset=len(raw)) from e
