"""Image quality metrics, pinned exactly.

PSNR: 10*log10(1/MSE) over all RGB channels of [0,1] images, capped at
100 dB for identical inputs so aggregates stay finite.

SSIM: single scale on BT.601 luma; 11x11 Gaussian window (sigma 1.5),
K1=0.01, K2=0.03, dynamic range 1.0, averaged over the valid region only
(no padding). Published SSIM numbers vary across implementations, so these
choices are fixed here and the reported values are self-consistent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import correlate2d

from . import pngio

PSNR_CAP_DB = 100.0
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two [0,1] images."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB))


def _luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
    return np.asarray(img, dtype=np.float64)


def _ssim_window() -> np.ndarray:
    r = _SSIM_WINDOW // 2
    d = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(d[:, None] ** 2 + d[None, :] ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    return k / k.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean single-scale SSIM over the valid region of the luma planes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    x, y = _luma(a), _luma(b)
    if min(x.shape) < _SSIM_WINDOW:
        raise ValueError(f"image {x.shape} smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    win = _ssim_window()
    mu_x = correlate2d(x, win, mode="valid")
    mu_y = correlate2d(y, win, mode="valid")
    var_x = np.maximum(correlate2d(x * x, win, mode="valid") - mu_x ** 2, 0.0)
    var_y = np.maximum(correlate2d(y * y, win, mode="valid") - mu_y ** 2, 0.0)
    cov = correlate2d(x * y, win, mode="valid") - mu_x * mu_y
    c1 = (_K1 * 1.0) ** 2
    c2 = (_K2 * 1.0) ** 2
    s = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / \
        ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))
    return float(s.mean())


@dataclass
class EvalReport:
    """Per-file PSNR/SSIM plus arithmetic-mean aggregates."""
    rows: list = field(default_factory=list)       # (filename, psnr_db, ssim)
    errors: list = field(default_factory=list)     # filenames missing a counterpart
    mean_psnr: float = 0.0
    mean_ssim: float = 0.0

    @property
    def count(self) -> int:
        return len(self.rows)


def evaluate_pairs(dir_restored, dir_reference) -> EvalReport:
    """Evaluate filename-matched images of two directories.

    Files missing their counterpart become error rows and are excluded from
    the aggregates. Row order is lexicographic, so reruns are byte-identical.
    """
    restored = {p.name: p for p in pngio.list_images(dir_restored)}
    reference = {p.name: p for p in pngio.list_images(dir_reference)}
    report = EvalReport()
    psnrs, ssims = [], []
    for name in sorted(set(restored) | set(reference)):
        if name not in restored or name not in reference:
            report.errors.append(name)
            continue
        a = pngio.read_image(restored[name])
        b = pngio.read_image(reference[name])
        p, s = psnr(a, b), ssim(a, b)
        report.rows.append((name, p, s))
        psnrs.append(p)
        ssims.append(s)
    if psnrs:
        report.mean_psnr = float(np.mean(psnrs))
        report.mean_ssim = float(np.mean(ssims))
    return report


def write_report(report: EvalReport, path) -> None:
    """CSV: filename, psnr_db, ssim; error rows have empty metric cells;
    one trailing aggregate row."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("filename", "psnr_db", "ssim"))
        for name, p, s in report.rows:
            w.writerow((name, repr(p), repr(s)))
        for name in report.errors:
            w.writerow((name, "", ""))
        w.writerow(("mean", repr(report.mean_psnr), repr(report.mean_ssim)))
