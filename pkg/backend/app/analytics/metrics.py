#!/usr/bin/env python3
"""
Image quality metrics on [0, 1] planes

PSNR uses peak 1.0 and reports a fixed cap for identical images. SSIM uses
an 11x11 Gaussian window (sigma 1.5) over the valid region with the standard
K1 = 0.01, K2 = 0.03; RGB images are scored per channel and averaged.
"""

from typing import Optional, Tuple

import numpy as np
from scipy import signal

from backend.app.core.errors import DimensionError, InputError

PSNR_CAP_DB = 99.0


def _pair(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, cap: float = PSNR_CAP_DB) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(10.0 * np.log10(1.0 / mse), cap)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim_map(
    a: np.ndarray,
    b: np.ndarray,
    window: Optional[np.ndarray] = None,
    k1: float = 0.01,
    k2: float = 0.03,
) -> np.ndarray:
    """Local SSIM of two H x W planes over the valid window positions"""
    a, b = _pair(a, b)
    w = gaussian_window() if window is None else window
    if a.ndim != 2:
        raise DimensionError(f"ssim_map expects H x W planes, got {a.shape}")
    if a.shape[0] < w.shape[0] or a.shape[1] < w.shape[1]:
        raise InputError(f"image {a.shape} is smaller than the {w.shape[0]}x{w.shape[1]} SSIM window")

    c1, c2 = (k1 * 1.0) ** 2, (k2 * 1.0) ** 2

    def filt(x: np.ndarray) -> np.ndarray:
        return signal.correlate2d(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    a, b = _pair(a, b)
    if a.ndim not in (2, 3) or a.shape[0] < window_size or a.shape[1] < window_size:
        raise InputError(f"image {a.shape} is smaller than the {window_size}x{window_size} SSIM window")
    if np.array_equal(a, b):
        return 1.0
    window = gaussian_window(window_size, sigma)
    if a.ndim == 3:
        value = float(np.mean([ssim_map(a[..., c], b[..., c], window, k1, k2).mean() for c in range(a.shape[-1])]))
    else:
        value = float(ssim_map(a, b, window, k1, k2).mean())
    return float(np.clip(value, -1.0, 1.0))

