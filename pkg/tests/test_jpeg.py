"""JPEG simulation: quantization tables, block DCT, full round trips."""

import numpy as np
import pytest

from opattn.distortion import (
    BASE_TABLE_CHROMA, BASE_TABLE_LUMA, apply_jpeg, block_dct, block_idct,
    jpeg_quant_tables, rgb_to_ycbcr, ycbcr_to_rgb,
)
from oracles import dct2_ref, rel_err


class TestQuantTables:
    def test_quality_50_equals_base(self):
        luma, chroma = jpeg_quant_tables(50)
        np.testing.assert_array_equal(luma, BASE_TABLE_LUMA)
        np.testing.assert_array_equal(chroma, BASE_TABLE_CHROMA)

    def test_quality_100_all_ones(self):
        luma, chroma = jpeg_quant_tables(100)
        np.testing.assert_array_equal(luma, np.ones((8, 8)))
        np.testing.assert_array_equal(chroma, np.ones((8, 8)))

    def test_monotone_in_quality(self):
        l10, c10 = jpeg_quant_tables(10)
        l90, c90 = jpeg_quant_tables(90)
        assert (l10 >= l90).all() and (c10 >= c90).all()

    @pytest.mark.parametrize("quality", [0, 101, -5])
    def test_out_of_range_rejected(self, quality):
        with pytest.raises(ValueError):
            jpeg_quant_tables(quality)

    def test_formula_spot_check(self):
        # q=10 -> scale=500: entry = clamp(floor((16*500+50)/100),1,255) = 80
        luma, _ = jpeg_quant_tables(10)
        assert luma[0, 0] == 80.0


class TestBlockDCT:
    def test_roundtrip_identity(self, rng):
        plane = rng.random((16, 24)) * 255 - 128
        back = block_idct(block_dct(plane))
        assert rel_err(back, plane) < 1e-6

    def test_matches_direct_dct_oracle(self, rng):
        block = rng.random((8, 8)) * 255 - 128
        mine = block_dct(block)
        assert rel_err(mine, dct2_ref(block)) < 1e-9

    def test_constant_block_is_dc_only(self):
        coef = block_dct(np.full((8, 8), 13.0))
        assert coef[0, 0] == pytest.approx(8 * 13.0)
        coef[0, 0] = 0.0
        np.testing.assert_allclose(coef, 0.0, atol=1e-12)


class TestColorTransform:
    def test_roundtrip(self, rng):
        rgb = rng.random((6, 6, 3)) * 255
        back = ycbcr_to_rgb(rgb_to_ycbcr(rgb))
        assert rel_err(back, rgb) < 1e-10

    def test_gray_has_neutral_chroma(self):
        g = np.full((4, 4, 3), 100.0)
        ycc = rgb_to_ycbcr(g)
        np.testing.assert_allclose(ycc[:, :, 0], 100.0)
        np.testing.assert_allclose(ycc[:, :, 1:], 128.0)


class TestApplyJpeg:
    def test_quality_100_nearly_lossless(self, rng, smooth_image_factory):
        # texture-free smooth content; also exercises the 8-padding
        img = smooth_image_factory(rng, 33, 45, texture=0.0)
        out = apply_jpeg(img, 100)
        assert np.abs(out - img).max() <= 2.0 / 255.0

    def test_constant_image_stable(self):
        img = np.full((16, 16, 3), 0.37)
        out = apply_jpeg(img, 50)
        assert np.abs(out - img).max() < 1.0 / 255.0

    def test_low_quality_degrades_more(self, rng, smooth_image_factory):
        img = smooth_image_factory(rng, 48, 48)
        err10 = np.abs(apply_jpeg(img, 10) - img).mean()
        err90 = np.abs(apply_jpeg(img, 90) - img).mean()
        assert err10 > err90

    def test_output_in_range_and_shape(self, rng):
        img = rng.random((21, 19, 3))
        out = apply_jpeg(img, 30)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_deterministic(self, rng):
        img = rng.random((24, 24, 3))
        assert apply_jpeg(img, 40).tobytes() == apply_jpeg(img, 40).tobytes()
