"""Raster image representation and ingestion.

Images are float arrays in [0, 1], shape (height, width, channels),
channel-interleaved. Glyphs are dark ink on a light background, so
binarization marks pixels *below* the threshold as foreground.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from skelfont.errors import (
    ChannelMismatch,
    InvalidSize,
    InvalidThreshold,
    MalformedImage,
    UnsupportedChannels,
    UnsupportedDepth,
)

KIND_GRAY = "gray"
KIND_RGB = "rgb"
KIND_RGBS = "rgbs"  # RGB + skeleton channel

_KIND_CHANNELS = {KIND_GRAY: 1, KIND_RGB: 3, KIND_RGBS: 4}

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Multi-channel image; data is (height, width, channels) float32 in [0,1]."""

    width: int
    height: int
    channels: int
    data: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in _KIND_CHANNELS:
            raise ChannelMismatch(f"unknown image kind {self.kind!r}")
        if _KIND_CHANNELS[self.kind] != self.channels:
            raise ChannelMismatch(
                f"kind {self.kind!r} requires {_KIND_CHANNELS[self.kind]} "
                f"channels, got {self.channels}"
            )
        if self.data.shape != (self.height, self.width, self.channels):
            raise ChannelMismatch(
                f"data shape {self.data.shape} != "
                f"({self.height}, {self.width}, {self.channels})"
            )


@dataclass(frozen=True, eq=False)
class BinaryGrid:
    """{0,1} grid, 1 = foreground (ink); bits is (height, width) uint8."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        if self.bits.shape != (self.height, self.width):
            raise ChannelMismatch(
                f"bits shape {self.bits.shape} != ({self.height}, {self.width})"
            )


def image_from_array(arr: np.ndarray, kind: str) -> RasterImage:
    """Wrap an (H, W, C) float array, clipping to [0, 1] and casting to f32."""
    arr = np.asarray(arr, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    arr = np.clip(arr, 0.0, 1.0)
    h, w, c = arr.shape
    return RasterImage(width=w, height=h, channels=c, data=arr, kind=kind)


def grid_from_array(arr: np.ndarray) -> BinaryGrid:
    bits = np.ascontiguousarray(np.asarray(arr) != 0, dtype=np.uint8)
    h, w = bits.shape
    return BinaryGrid(width=w, height=h, bits=bits)


def _png_bit_depth(data: bytes) -> int:
    # IHDR is mandated to be the first chunk; bit depth is its 9th byte.
    if len(data) < 26 or data[12:16] != b"IHDR":
        raise MalformedImage("missing IHDR chunk")
    return data[24]


def decode_png(data: bytes) -> RasterImage:
    """Decode an 8-bit PNG into an RGB image.

    Grayscale is replicated across three channels; alpha is composited
    over white. Raises MalformedImage on undecodable input and
    UnsupportedDepth for 16-bit files.
    """
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise MalformedImage("expected a byte sequence")
    data = bytes(data)
    if data[:8] != _PNG_SIGNATURE:
        raise MalformedImage("not a PNG byte stream")
    if _png_bit_depth(data) == 16:
        raise UnsupportedDepth("16-bit PNG input is not supported")
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            mode = img.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise UnsupportedDepth(f"unsupported pixel depth (mode {mode})")
            if mode == "P":
                img = img.convert("RGBA" if "transparency" in img.info else "RGB")
                mode = img.mode
            if mode == "L":
                arr = np.asarray(img, dtype=np.float32) / 255.0
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            elif mode == "LA":
                arr = np.asarray(img, dtype=np.float32) / 255.0
                gray, alpha = arr[:, :, 0], arr[:, :, 1]
                gray = gray * alpha + (1.0 - alpha)
                arr = np.repeat(gray[:, :, None], 3, axis=2)
            elif mode == "RGB":
                arr = np.asarray(img, dtype=np.float32) / 255.0
            elif mode == "RGBA":
                arr = np.asarray(img, dtype=np.float32) / 255.0
                alpha = arr[:, :, 3:4]
                arr = arr[:, :, :3] * alpha + (1.0 - alpha)
            else:
                raise MalformedImage(f"unsupported PNG mode {mode}")
    except UnidentifiedImageError as exc:
        raise MalformedImage(str(exc)) from exc
    except (OSError, SyntaxError, struct.error) as exc:
        raise MalformedImage(str(exc)) from exc
    return image_from_array(arr, KIND_RGB)


def encode_png(img: RasterImage) -> bytes:
    """Encode a 1- or 3-channel image as an 8-bit PNG; v maps to round(v*255)."""
    if img.channels not in (1, 3):
        raise UnsupportedChannels(
            f"PNG output supports 1 or 3 channels, got {img.channels} "
            "(persist 4-channel data via the checkpoint container)"
        )
    quantized = np.floor(img.data * 255.0 + 0.5).astype(np.uint8)
    if img.channels == 1:
        pil = Image.fromarray(quantized[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(quantized, mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def to_gray(img: RasterImage) -> RasterImage:
    """BT.601 luminance: 0.299 R + 0.587 G + 0.114 B."""
    if img.channels != 3:
        raise ChannelMismatch(f"to_gray expects 3 channels, got {img.channels}")
    gray = (
        img.data[:, :, 0] * _LUMA_R
        + img.data[:, :, 1] * _LUMA_G
        + img.data[:, :, 2] * _LUMA_B
    )
    return image_from_array(gray, KIND_GRAY)


def binarize(img: RasterImage, threshold: float) -> BinaryGrid:
    """Mark dark pixels as foreground: bit = 1 iff gray < threshold."""
    if img.channels != 1:
        raise ChannelMismatch(f"binarize expects 1 channel, got {img.channels}")
    if not (0.0 < threshold < 1.0):
        raise InvalidThreshold(f"threshold must lie in (0, 1), got {threshold}")
    return grid_from_array(img.data[:, :, 0] < threshold)


def _axis_positions(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source indices and interpolation weights mapping dst samples onto src."""
    if dst == 1:
        pos = np.array([(src - 1) / 2.0])
    else:
        pos = np.arange(dst, dtype=np.float64) * ((src - 1) / (dst - 1))
    i0 = np.clip(np.floor(pos).astype(np.int64), 0, max(src - 2, 0))
    i1 = np.minimum(i0 + 1, src - 1)
    frac = (pos - i0).astype(np.float32)
    return i0, i1, frac


def resize(img: RasterImage, width: int, height: int) -> RasterImage:
    """Bilinear resize (endpoints aligned), per channel, clamped to [0, 1]."""
    if width < 1 or height < 1:
        raise InvalidSize(f"target size {width}x{height} is invalid")
    if width == img.width and height == img.height:
        return RasterImage(
            img.width, img.height, img.channels, img.data.copy(), img.kind
        )
    x0, x1, fx = _axis_positions(img.width, width)
    y0, y1, fy = _axis_positions(img.height, height)
    rows0 = img.data[y0]
    rows1 = img.data[y1]
    # lerp as v0 + f*(v1-v0) so constant inputs reproduce exactly
    mid = rows0 + fy[:, None, None] * (rows1 - rows0)
    cols0 = mid[:, x0]
    cols1 = mid[:, x1]
    out = cols0 + fx[None, :, None] * (cols1 - cols0)
    return image_from_array(out, img.kind)
