"""Gaussian blur and additive Gaussian noise."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized square Gaussian kernel of size 2*ceil(3*sigma)+1.

    sigma=0 degenerates to the 1x1 identity kernel.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.ones((1, 1))
    r = int(np.ceil(3.0 * sigma))
    d = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _gaussian_kernel_1d(sigma: float) -> np.ndarray:
    r = int(np.ceil(3.0 * sigma))
    d = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-d ** 2 / (2.0 * sigma * sigma))
    return k / k.sum()


def apply_gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Per-channel blur with symmetric-reflection edges, clamped to [0,1].

    The Gaussian factorizes, so this runs as two 1-d passes; the result
    equals the direct 2-d convolution with ``gaussian_kernel(sigma)``.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img.copy()
    k1 = _gaussian_kernel_1d(sigma)
    out = np.empty_like(img, dtype=np.float64)
    for c in range(img.shape[2]):
        tmp = correlate1d(img[:, :, c], k1, axis=0, mode="reflect")
        out[:, :, c] = correlate1d(tmp, k1, axis=1, mode="reflect")
    return np.clip(out, 0.0, 1.0)


def apply_gaussian_noise(img: np.ndarray, sigma_255: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. normal noise with standard deviation sigma_255/255, then clamp."""
    if sigma_255 < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma_255}")
    if sigma_255 == 0:
        return img.copy()
    noisy = img + rng.normal(0.0, sigma_255 / 255.0, size=img.shape)
    return np.clip(noisy, 0.0, 1.0)
