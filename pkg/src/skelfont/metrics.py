"""Evaluation metrics: MSE, PSNR, SSIM, and Frechet feature distance.

PSNR uses MAX = 1 (images live in [0, 1]) and reports an infinite
sentinel for identical inputs. SSIM runs the canonical parameters:
11x11 Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03, L = 1,
averaged over valid window positions.

The Frechet distance is computed exactly over Gaussian fits of
pluggable feature vectors. The built-in extractor downsamples to 16x16
grayscale and flattens (d = 256); externally computed features load
from the tensor container under the name "features". Scores from the
built-in extractor are self-consistent but not comparable to
Inception-based reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from skelfont.checkpoint import load_container
from skelfont.errors import (
    DataEmpty,
    DimensionMismatch,
    ImageTooSmall,
    NumericalFailure,
    ShapeMismatch,
)
from skelfont.imgcore import RasterImage, resize, to_gray

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

FEATURE_GRID = 16


@dataclass(frozen=True)
class MetricReport:
    """Per-task metric row; serialized as CSV task,n,mse,psnr,ssim,fid."""

    task: str
    n: int
    mse: float
    psnr: float
    ssim: float
    fid: float
    diversity: float | None = None

    def csv_row(self) -> str:
        return (f"{self.task},{self.n},{self.mse:.9g},{self.psnr:.9g},"
                f"{self.ssim:.9g},{self.fid:.9g}")


CSV_HEADER = "task,n,mse,psnr,ssim,fid"


def write_metric_csv(path, reports):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")


@dataclass(frozen=True)
class FeatureStats:
    """Gaussian fit of a feature cloud: mean, unbiased covariance, count."""

    mean: np.ndarray
    cov: np.ndarray
    count: int


def _check_same_geometry(a: RasterImage, b: RasterImage):
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"image shapes differ: {a.data.shape} vs {b.data.shape}")


def mse(a: RasterImage, b: RasterImage) -> float:
    _check_same_geometry(a, b)
    diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.mean(diff * diff))


def psnr(a: RasterImage, b: RasterImage) -> float:
    m = mse(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / m)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _as_gray_2d(img: RasterImage) -> np.ndarray:
    if img.channels == 3:
        img = to_gray(img)
    if img.channels != 1:
        raise ShapeMismatch(f"ssim expects gray or RGB, got {img.channels} channels")
    return img.data[:, :, 0].astype(np.float64)


def ssim(a: RasterImage, b: RasterImage) -> float:
    _check_same_geometry(a, b)
    x = _as_gray_2d(a)
    y = _as_gray_2d(b)
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ImageTooSmall(
            f"ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape}"
        )
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    mu_x = convolve2d(x, win, mode="valid")
    mu_y = convolve2d(y, win, mode="valid")
    xx = convolve2d(x * x, win, mode="valid") - mu_x * mu_x
    yy = convolve2d(y * y, win, mode="valid") - mu_y * mu_y
    xy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float(np.mean(num / den))


def feature_stats(features: np.ndarray) -> FeatureStats:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionMismatch(f"features must be (n, d), got {features.shape}")
    n = features.shape[0]
    if n < 2:
        raise DataEmpty(f"feature statistics need >= 2 samples, got {n}")
    mean = features.mean(axis=0)
    cov = np.atleast_2d(np.cov(features, rowvar=False))
    return FeatureStats(mean=mean, cov=cov, count=n)


def _psd_eigvals(sym: np.ndarray, floor: float = -1e-6) -> np.ndarray:
    vals = np.linalg.eigvalsh(sym)
    if vals.min(initial=0.0) < floor:
        raise NumericalFailure(
            f"matrix eigenvalue {vals.min():.3e} below {floor:.0e}"
        )
    return np.clip(vals, 0.0, None)


def fid(s1: FeatureStats, s2: FeatureStats) -> float:
    """||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)).

    The matrix square root goes through the eigendecomposition of the
    symmetrized product sqrt(S1) S2 sqrt(S1); tiny negative eigenvalues
    are clamped to zero and the result is floored at 0.
    """
    if s1.mean.shape != s2.mean.shape:
        raise DimensionMismatch(
            f"feature dims differ: {s1.mean.shape} vs {s2.mean.shape}"
        )
    diff = s1.mean - s2.mean
    vals1, vecs1 = np.linalg.eigh((s1.cov + s1.cov.T) / 2.0)
    if vals1.min(initial=0.0) < -1e-6:
        raise NumericalFailure(f"covariance eigenvalue {vals1.min():.3e} below -1e-6")
    sqrt1 = (vecs1 * np.sqrt(np.clip(vals1, 0.0, None))) @ vecs1.T
    middle = sqrt1 @ ((s2.cov + s2.cov.T) / 2.0) @ sqrt1
    cross = _psd_eigvals((middle + middle.T) / 2.0)
    value = (
        float(diff @ diff)
        + float(np.trace(s1.cov))
        + float(np.trace(s2.cov))
        - 2.0 * float(np.sqrt(cross).sum())
    )
    return max(value, 0.0)


def extract_features(images, extractor: str = "flatten-gray-16") -> np.ndarray:
    """Feature matrix (n, d) in deterministic image order."""
    if extractor == "flatten-gray-16":
        rows = []
        for img in images:
            gray = img if img.channels == 1 else to_gray(img)
            small = resize(gray, FEATURE_GRID, FEATURE_GRID)
            rows.append(small.data.reshape(-1).astype(np.float64))
        if not rows:
            raise DataEmpty("no images to extract features from")
        return np.stack(rows, axis=0)
    if extractor.startswith("file:"):
        tensors, _, _ = load_container(extractor[len("file:"):])
        if "features" not in tensors:
            raise DimensionMismatch("feature file lacks a 'features' tensor")
        feats = tensors["features"]
        if feats.ndim != 2:
            raise DimensionMismatch(f"'features' must be (n, d), got {feats.shape}")
        return feats.astype(np.float64)
    raise ValueError(f"unknown extractor {extractor!r}")
