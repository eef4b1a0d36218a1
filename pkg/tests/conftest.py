import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_smooth_image(rng, h, w, cells=6, texture=0.02):
    """Natural-ish test image: bilinear upsampling of a coarse random grid
    plus a faint fine texture, in [0,1], float64 (H,W,3)."""
    coarse = rng.random((cells + 1, cells + 1, 3))
    ys = np.linspace(0, cells, h)
    xs = np.linspace(0, cells, w)
    y0 = np.clip(ys.astype(int), 0, cells - 1)
    x0 = np.clip(xs.astype(int), 0, cells - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    img = (coarse[y0][:, x0] * (1 - fy) * (1 - fx)
           + coarse[y0 + 1][:, x0] * fy * (1 - fx)
           + coarse[y0][:, x0 + 1] * (1 - fy) * fx
           + coarse[y0 + 1][:, x0 + 1] * fy * fx)
    if texture:
        img += texture * rng.standard_normal((h, w, 3))
    return np.clip(img, 0.0, 1.0)


@pytest.fixture
def smooth_image_factory():
    return make_smooth_image
