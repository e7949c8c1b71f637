"""
Image-quality metrics on window-normalized images: PSNR, SSIM and GLCM
texture features with their radiomics losses.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from skimage.feature import graycomatrix, graycoprops
from skimage.metrics import peak_signal_noise_ratio

from ..errors import ShapeError

PSNR_CAP_DB = 99.0
# below this the marginal spread of P counts as zero
DEGENERATE_SIGMA = 1e-15


def _pair(a, b) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) in dB, saturating at 99 dB (identical images)."""
    a, b = _pair(a, b)
    if not np.any(a != b):
        return PSNR_CAP_DB
    return min(float(peak_signal_noise_ratio(a, b, data_range=peak)), PSNR_CAP_DB)


def ssim(a, b, window: int = 8, k1: float = 0.01, k2: float = 0.03, peak: float = 1.0) -> float:
    """
    Mean local SSIM over every valid window x window position, uniform
    weights and population (co)variances.
    """
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < window:
        raise ShapeError(f"ssim needs a 2-D image of at least {window}x{window}, got {a.shape}")
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    def local_mean(x: np.ndarray) -> np.ndarray:
        return sliding_window_view(x, (window, window)).mean(axis=(-2, -1))

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def quantize(image, levels: int) -> np.ndarray:
    """Uniform quantization of [0, 1] values to integer gray levels 0..levels-1."""
    if not 2 <= levels <= 256:
        raise ValueError(f"levels must be in [2, 256], got {levels}")
    scaled = np.floor(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * levels)
    return np.minimum(scaled, levels - 1).astype(np.uint8)


def co_occurrence(
    image,
    levels: int = 64,
    offset: Tuple[int, int] = (0, 1),
    symmetric: bool = True,
) -> np.ndarray:
    """Normalized gray-level co-occurrence matrix [levels, levels] for pixel pairs (r, c) -> (r+dr, c+dc)."""
    image = np.asarray(image)
    dr, dc = offset
    if image.ndim != 2:
        raise ShapeError(f"co-occurrence needs a 2-D image, got {image.shape}")
    if (dr, dc) == (0, 0) or abs(dr) >= image.shape[0] or abs(dc) >= image.shape[1]:
        raise ValueError(f"offset {offset} leaves no pixel pairs in a {image.shape} image")
    counts = graycomatrix(
        quantize(image, levels),
        distances=[math.hypot(dr, dc)],
        angles=[math.atan2(dr, dc)],
        levels=levels,
        symmetric=symmetric,
        normed=True,
    )
    return counts[:, :, 0, 0]


@dataclass(frozen=True)
class GlcmFeatures:
    """Texture features of one image; correlation is None when P has no spread."""

    contrast: float
    dissimilarity: float
    correlation: Optional[float]

    @property
    def correlation_degenerate(self) -> bool:
        return self.correlation is None


def glcm_features(
    image,
    levels: int = 64,
    offset: Tuple[int, int] = (0, 1),
    symmetric: bool = True,
) -> GlcmFeatures:
    p = co_occurrence(image, levels, offset, symmetric)
    props = p[:, :, np.newaxis, np.newaxis]
    i, j = np.ogrid[0:levels, 0:levels]
    sigma_i = math.sqrt(float(np.sum(p * (i - np.sum(i * p)) ** 2)))
    sigma_j = math.sqrt(float(np.sum(p * (j - np.sum(j * p)) ** 2)))
    degenerate = sigma_i < DEGENERATE_SIGMA or sigma_j < DEGENERATE_SIGMA
    return GlcmFeatures(
        contrast=float(graycoprops(props, "contrast")[0, 0]),
        dissimilarity=float(graycoprops(props, "dissimilarity")[0, 0]),
        correlation=None if degenerate else float(graycoprops(props, "correlation")[0, 0]),
    )


@dataclass(frozen=True)
class RadiomicsLoss:
    """Absolute feature differences; correlation is None if either side is degenerate."""

    contrast: float
    correlation: Optional[float]
    dissimilarity: float

    @property
    def correlation_degenerate(self) -> bool:
        return self.correlation is None


def radiomics_loss(denoised, reference, levels: int = 64, offset: Tuple[int, int] = (0, 1)) -> RadiomicsLoss:
    a, b = _pair(denoised, reference)
    fa = glcm_features(a, levels, offset)
    fb = glcm_features(b, levels, offset)
    correlation = None
    if not (fa.correlation_degenerate or fb.correlation_degenerate):
        correlation = abs(fa.correlation - fb.correlation)
    return RadiomicsLoss(
        contrast=abs(fa.contrast - fb.contrast),
        correlation=correlation,
        dissimilarity=abs(fa.dissimilarity - fb.dissimilarity),
    )
