"""The four training loss terms and their weighted total.

Scores feeding the logs are clamped to [eps, 1-eps] so saturated
discriminators keep every term finite. The generator's adversarial
term defaults to the non-saturating form (-log D(fake)); the literal
minimax form (+log(1 - D(fake))) stays available behind a switch.

The skeleton term compares the source glyph's skeleton mask against
the reconstruction's skeleton mask weighted by differentiable ink
intensity. Thinning itself is a discrete pixel selection, so the mask
is gradient-opaque; gradient reaches the generator only through the
intensity of pixels the mask retains ("masked-intensity" mode), or not
at all ("none" mode, monitored regularizer).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from skelfont import autodiff as ad
from skelfont.autodiff import Tensor
from skelfont.expansion import batch_skeleton_masks
from skelfont.imgcore import RasterImage
from skelfont.skeleton import ske

LOG_EPS = 1e-7

GAN_LOSS_MODES = ("nonsat", "minimax")
SKE_GRAD_MODES = ("masked-intensity", "none")


@dataclass(frozen=True)
class LossWeights:
    """Weights of the consistency terms; defaults follow the reference setup."""

    lambda_cyc: float = 1.0
    lambda_ske: float = 0.001

    def validate(self):
        if self.lambda_cyc < 0 or self.lambda_ske < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    adv_x: float
    adv_y: float
    cyc: float
    ske: float
    total: float

    def is_finite(self) -> bool:
        return all(
            np.isfinite(v) for v in (self.adv_x, self.adv_y, self.cyc, self.ske, self.total)
        )


def _clamped(scores: Tensor) -> Tensor:
    return ad.clamp(scores, LOG_EPS, 1.0 - LOG_EPS)


def _one_minus(t: Tensor) -> Tensor:
    return ad.add_scalar(ad.mul_scalar(t, -1.0), 1.0)


def adv_loss_d(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Discriminator target: -(mean log D(real) + mean log(1 - D(fake)))."""
    real_term = ad.mean(ad.log(_clamped(d_real)))
    fake_term = ad.mean(ad.log(_one_minus(_clamped(d_fake))))
    return ad.mul_scalar(ad.add(real_term, fake_term), -1.0)


def adv_loss_g(d_fake: Tensor, mode: str = "nonsat") -> Tensor:
    """Generator adversarial term on fake scores."""
    if mode == "nonsat":
        return ad.mul_scalar(ad.mean(ad.log(_clamped(d_fake))), -1.0)
    if mode == "minimax":
        return ad.mean(ad.log(_one_minus(_clamped(d_fake))))
    raise ValueError(f"gan loss mode must be one of {GAN_LOSS_MODES}, got {mode!r}")


def cycle_loss(x: Tensor, x_tilde: Tensor) -> Tensor:
    """L1 reconstruction: mean |x - x_tilde| over all elements."""
    return ad.abs_mean(x, x_tilde)


def _luma_kernel(dtype) -> Tensor:
    k = np.array([0.299, 0.587, 0.114], dtype=dtype).reshape(1, 3, 1, 1)
    return Tensor(k)


def soft_ink(x_tilde: Tensor) -> Tensor:
    """Differentiable ink intensity of a model-space batch: (1 - luma) / 2."""
    lum = ad.conv2d(x_tilde, _luma_kernel(x_tilde.data.dtype), None, 1, 0)
    return ad.mul_scalar(_one_minus(lum), 0.5)


def ske_loss(
    x_imgs: Sequence[RasterImage] | None,
    x_tilde: Tensor,
    threshold: float,
    grad_mode: str = "masked-intensity",
    x_masks: np.ndarray | None = None,
) -> Tensor:
    """Skeleton consistency between source glyphs and their reconstruction.

    x_tilde is the generated (N, 3, H, W) batch in [-1, 1]. The source
    skeleton masks may be passed precomputed via x_masks (N, 1, H, W);
    otherwise they are extracted from x_imgs at the given threshold.
    """
    if grad_mode not in SKE_GRAD_MODES:
        raise ValueError(f"ske grad mode must be one of {SKE_GRAD_MODES}, got {grad_mode!r}")
    dtype = x_tilde.data.dtype
    if x_masks is None:
        if x_imgs is None:
            raise ValueError("ske_loss needs x_imgs or x_masks")
        stacked = np.stack(
            [ske(img, threshold).bits for img in x_imgs], axis=0
        )[:, None, :, :]
        x_masks = stacked.astype(dtype)
    else:
        x_masks = x_masks.astype(dtype, copy=False)
    recon_masks = batch_skeleton_masks(x_tilde.data, threshold)
    source = Tensor(x_masks)
    if grad_mode == "masked-intensity":
        recon = ad.mul(Tensor(recon_masks), soft_ink(x_tilde))
    else:
        recon = ad.mul(Tensor(recon_masks), soft_ink(x_tilde.detach()))
    return ad.abs_mean(source, recon)


def total_loss(adv_x: float, adv_y: float, cyc: float, ske_term: float,
               w: LossWeights) -> LossBreakdown:
    """Assemble the reported breakdown with the exact weighted-sum identity."""
    total = adv_x + adv_y + w.lambda_cyc * cyc + w.lambda_ske * ske_term
    return LossBreakdown(adv_x=adv_x, adv_y=adv_y, cyc=cyc, ske=ske_term, total=total)
