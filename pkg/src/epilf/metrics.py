"""PSNR and multi-scale SSIM."""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; ``inf`` for identical images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if not peak > 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = WINDOW, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-x * x / (2 * sigma * sigma))
    g /= g.sum()
    return g


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, g, axis=0, mode="constant")
    out = ndimage.correlate1d(out, g, axis=1, mode="constant")
    r = len(g) // 2
    return out[r:img.shape[0] - r, r:img.shape[1] - r]


def _ssim_terms(a, b, peak):
    """Mean SSIM and mean contrast-structure term over valid windows."""
    g = gaussian_window()
    c1 = (K1 * peak) ** 2
    c2 = (K2 * peak) ** 2
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
    cs = (2 * cov + c2) / (var_a + var_b + c2)
    return float(np.mean(lum * cs)), float(np.mean(cs))


def _pool(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def n_scales(shape) -> int:
    """Number of dyadic scales whose coarsest image still fits the window."""
    m = min(shape)
    count = 0
    while count < len(MS_SSIM_WEIGHTS) and m >= WINDOW:
        count += 1
        m //= 2
    return count


def _signed_pow(x: float, w: float) -> float:
    return math.copysign(abs(x) ** w, x)


def ms_ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Multi-scale SSIM of two single-channel images.

    Uses up to five scales; smaller images use fewer scales with the leading
    weights renormalized to sum to one.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ValueError("ms_ssim expects 2D images")
    scales = n_scales(a.shape)
    if scales == 0:
        raise ValueError(f"image {a.shape} is smaller than the {WINDOW}x{WINDOW} window")
    weights = np.array(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    value = 1.0
    for j in range(scales):
        ssim, cs = _ssim_terms(a, b, peak)
        if j == scales - 1:
            value *= _signed_pow(ssim, weights[j])
        else:
            value *= _signed_pow(cs, weights[j])
            a, b = _pool(a), _pool(b)
    return value
