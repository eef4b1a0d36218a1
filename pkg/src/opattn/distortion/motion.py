"""Camera-shake motion blur: random particle trajectories rasterized to PSFs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

# impulse magnitude relative to the per-step jitter std
IMPULSE_SCALE = 20.0


@dataclass(frozen=True)
class TrajectoryParams:
    """Particle-simulation constants; max_len is the target arc length in pixels."""
    max_len: float
    num_steps: int = 2000
    inertia: float = 0.7
    gaussian_jitter_std: float = 1.0
    impulse_probability: float = 0.005

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")
        if not 0.0 <= self.inertia < 1.0:
            raise ValueError(f"inertia must be in [0,1), got {self.inertia}")
        if not 0.0 <= self.impulse_probability <= 1.0:
            raise ValueError("impulse_probability must be in [0,1]")
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")


def generate_trajectory(params: TrajectoryParams, rng: np.random.Generator) -> np.ndarray:
    """Simulate a jittering particle and rescale the path to the target arc length.

    Velocity update: v <- inertia * v + jitter, plus an occasional large
    random impulse. Returns (num_steps+1, 2) positions starting at the origin;
    a path with zero arc length (no jitter, no impulses) stays a single dot.
    """
    n = params.num_steps
    v = np.zeros(2)
    pts = np.zeros((n + 1, 2))
    for t in range(n):
        v = params.inertia * v + rng.normal(0.0, params.gaussian_jitter_std, size=2)
        if rng.random() < params.impulse_probability:
            v = v + rng.normal(0.0, IMPULSE_SCALE * params.gaussian_jitter_std, size=2)
        pts[t + 1] = pts[t] + v
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = seg.sum()
    if arc > 0:
        pts *= params.max_len / arc
    return pts


def trajectory_to_kernel(points: np.ndarray, kernel_size: int) -> np.ndarray:
    """Rasterize trajectory points into a normalized PSF by bilinear splatting.

    Points are centered on their centroid. If they do not fit inside
    ``kernel_size`` (odd), the kernel grows to the next odd size that fits.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise ValueError("trajectory must contain at least one point")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and positive, got {kernel_size}")
    centered = points.reshape(-1, 2) - points.reshape(-1, 2).mean(axis=0)

    def taps(size):
        g = centered + (size - 1) / 2.0
        idx = np.floor(g).astype(int)
        frac = g - idx
        return g, idx, frac

    size = kernel_size
    while True:
        _, idx, frac = taps(size)
        hi = idx + (frac > 0)  # highest index any positive-weight tap touches
        if (idx >= 0).all() and (hi <= size - 1).all():
            break
        size += 2

    k = np.zeros((size, size))
    _, idx, frac = taps(size)
    ix, iy = idx[:, 0], idx[:, 1]
    fx, fy = frac[:, 0], frac[:, 1]
    for dy, dx, wgt in ((0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx),
                        (1, 0, fy * (1 - fx)), (1, 1, fy * fx)):
        live = wgt > 0
        np.add.at(k, (iy[live] + dy, ix[live] + dx), wgt[live])
    return k / k.sum()


def apply_motion_blur(img: np.ndarray, psf: np.ndarray) -> np.ndarray:
    """Per-channel convolution with the PSF, reflective edges, clamp to [0,1]."""
    if abs(psf.sum() - 1.0) > 1e-6:
        raise ValueError(f"PSF must sum to 1, sums to {psf.sum()}")
    if (psf < 0).any():
        raise ValueError("PSF entries must be nonnegative")
    out = np.empty_like(img, dtype=np.float64)
    for c in range(img.shape[2]):
        out[:, :, c] = convolve(img[:, :, c], psf, mode="reflect")
    return np.clip(out, 0.0, 1.0)
