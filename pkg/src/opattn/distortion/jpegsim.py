"""JPEG compression artifacts from first principles.

Only the lossy stages are simulated: BT.601 full-range color transform,
8x8 blockwise orthonormal DCT, quantization with quality-scaled standard
tables, dequantization, inverse DCT. Entropy coding and chroma subsampling
are omitted (both lossless or optional) - quantization is the sole source
of artifacts.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dctn, idctn

# Standard base quantization tables (Annex K of the JPEG standard).
BASE_TABLE_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

BASE_TABLE_CHROMA = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.float64)

_KR, _KG, _KB = 0.299, 0.587, 0.114


def jpeg_quant_tables(quality: int) -> tuple[np.ndarray, np.ndarray]:
    """Quality-scaled (luma, chroma) tables via the conventional mapping:
    scale = 5000/q for q < 50 else 200 - 2q; entry = clamp(floor((base*scale+50)/100), 1, 255).
    """
    q = int(quality)
    if q != quality or not 1 <= q <= 100:
        raise ValueError(f"quality must be an integer in [1,100], got {quality!r}")
    scale = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    out = []
    for base in (BASE_TABLE_LUMA, BASE_TABLE_CHROMA):
        t = np.floor((base * scale + 50.0) / 100.0)
        out.append(np.clip(t, 1.0, 255.0))
    return out[0], out[1]


def rgb_to_ycbcr(rgb255: np.ndarray) -> np.ndarray:
    """Full-range BT.601: input/output on the 0..255 scale, chroma centered at 128."""
    r, g, b = rgb255[..., 0], rgb255[..., 1], rgb255[..., 2]
    y = _KR * r + _KG * g + _KB * b
    cb = (b - y) / (2.0 * (1.0 - _KB)) + 128.0
    cr = (r - y) / (2.0 * (1.0 - _KR)) + 128.0
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 2.0 * (1.0 - _KR) * cr
    b = y + 2.0 * (1.0 - _KB) * cb
    g = (y - _KR * r - _KB * b) / _KG
    return np.stack([r, g, b], axis=-1)


def _to_blocks(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 8, 8, w // 8, 8)


def block_dct(plane: np.ndarray) -> np.ndarray:
    """Orthonormal 2-d DCT-II applied to every 8x8 block of a plane."""
    return dctn(_to_blocks(plane), type=2, norm="ortho", axes=(1, 3)).reshape(plane.shape)


def block_idct(plane: np.ndarray) -> np.ndarray:
    return idctn(_to_blocks(plane), type=2, norm="ortho", axes=(1, 3)).reshape(plane.shape)


def apply_jpeg(img: np.ndarray, quality: int) -> np.ndarray:
    """Round-trip an [0,1] RGB image through JPEG quantization at ``quality``."""
    luma_t, chroma_t = jpeg_quant_tables(quality)
    h, w = img.shape[:2]
    ph, pw = (-h) % 8, (-w) % 8
    x = np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="edge")
    ycc = rgb_to_ycbcr(x * 255.0)
    out = np.empty_like(ycc)
    for c, table in enumerate((luma_t, chroma_t, chroma_t)):
        coef = block_dct(ycc[:, :, c] - 128.0)
        tiles = np.tile(table, (coef.shape[0] // 8, coef.shape[1] // 8))
        coef = np.round(coef / tiles) * tiles
        out[:, :, c] = block_idct(coef) + 128.0
    rgb = ycbcr_to_rgb(out) / 255.0
    return np.clip(rgb[:h, :w], 0.0, 1.0)
