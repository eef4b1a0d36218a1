"""In-memory patch dataset loaded from a synthesized dataset directory."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import pngio


class PatchDataset:
    """Pairs of clean/distorted patches as (N, 3, H, W) arrays in [0,1].

    Reads every PNG under {root}/clean and {root}/distorted with matching
    filenames, in lexicographic order.
    """

    def __init__(self, root, dtype=np.float32):
        root = Path(root)
        clean_dir, dist_dir = root / "clean", root / "distorted"
        if not clean_dir.is_dir() or not dist_dir.is_dir():
            raise FileNotFoundError(f"{root} does not contain clean/ and distorted/ directories")
        clean = {p.name: p for p in pngio.list_images(clean_dir)}
        dist = {p.name: p for p in pngio.list_images(dist_dir)}
        names = sorted(set(clean) & set(dist))
        if not names:
            raise ValueError(f"no paired patches found under {root}")
        self.names = names
        self.clean = np.stack([_chw(pngio.read_image(clean[n]), dtype) for n in names])
        self.distorted = np.stack([_chw(pngio.read_image(dist[n]), dtype) for n in names])

    def __len__(self) -> int:
        return len(self.names)

    @property
    def patch_size(self) -> tuple[int, int]:
        return self.clean.shape[2], self.clean.shape[3]


def _chw(img: np.ndarray, dtype) -> np.ndarray:
    return np.ascontiguousarray(img.transpose(2, 0, 1), dtype=dtype)


def epoch_plan(seed: int, epoch: int, n: int):
    """Deterministic per-epoch shuffle and augmentation bits.

    Derived functionally from (seed, epoch), so resuming mid-run reconstructs
    the identical order without serialized generator state.
    """
    from ..distortion import derive_seed, rng_from_seed
    rng = rng_from_seed(derive_seed(seed, epoch))
    perm = rng.permutation(n)
    flips = rng.integers(0, 2, size=(n, 2))
    return perm, flips


def augment_batch(x: np.ndarray, flips: np.ndarray) -> np.ndarray:
    """Apply per-sample horizontal/vertical flips (bits column 0/1)."""
    out = x.copy()
    for i, (fh, fv) in enumerate(flips):
        if fh:
            out[i] = out[i, :, :, ::-1]
        if fv:
            out[i] = out[i, :, ::-1, :]
    return out
