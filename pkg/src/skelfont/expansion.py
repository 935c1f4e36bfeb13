"""Skeleton-guided channel expansion.

Fuses a 3-channel glyph with its 1-channel skeleton into the 4-channel
generator input. The RGB planes pass through untouched; the skeleton
rides along as a fourth channel so the generator sees explicit stroke
structure per input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from skelfont.autodiff import Tensor
from skelfont.errors import ChannelMismatch
from skelfont.imgcore import KIND_RGBS, RasterImage
from skelfont.skeleton import ske


@dataclass(frozen=True)
class ExpandedInput:
    """4-channel image (R, G, B, S); S is the {0,1} skeleton plane."""

    image: RasterImage


def expand(img: RasterImage, threshold: float) -> ExpandedInput:
    """Append the glyph's skeleton as a fourth channel."""
    if img.channels != 3:
        raise ChannelMismatch(f"expand expects an RGB image, got {img.channels} channels")
    mask = ske(img, threshold)
    data = np.concatenate(
        [img.data, mask.bits[:, :, None].astype(np.float32)], axis=2
    )
    fused = RasterImage(
        width=img.width, height=img.height, channels=4, data=data, kind=KIND_RGBS
    )
    return ExpandedInput(image=fused)


def to_model_input(e: ExpandedInput) -> Tensor:
    """Map to a (4, H, W) tensor in [-1, 1]: v -> 2v - 1 on every channel.

    RGB lands in [-1, 1]; the skeleton plane lands on {-1, +1}. The map
    is invertible on RGB via v = (t + 1) / 2.
    """
    chw = e.image.data.transpose(2, 0, 1)
    return Tensor(chw * np.float32(2.0) - np.float32(1.0))


def batch_skeleton_masks(batch: np.ndarray, threshold: float) -> np.ndarray:
    """Skeleton masks of a model-space batch, gradient-opaque.

    batch is (N, 3, H, W) in [-1, 1]. Returns (N, 1, H, W) {0,1} floats
    of the same dtype, recomputed from the denormalized pixels.
    """
    n, _, h, w = batch.shape
    out = np.zeros((n, 1, h, w), dtype=batch.dtype)
    for i in range(n):
        rgb = np.clip((batch[i].transpose(1, 2, 0) + 1.0) / 2.0, 0.0, 1.0)
        img = RasterImage(width=w, height=h, channels=3,
                          data=rgb.astype(np.float32), kind="rgb")
        out[i, 0] = ske(img, threshold).bits
    return out

