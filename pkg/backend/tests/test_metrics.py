"""PSNR and SSIM"""

import math

import numpy as np
import pytest

from backend.app.analytics.metrics import PSNR_CAP_DB, gaussian_window, psnr, ssim
from backend.app.core.errors import DimensionError, InputError

pytestmark = pytest.mark.unit


def brute_force_ssim(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03):
    w = gaussian_window(size, sigma)
    c1, c2 = k1 ** 2, k2 ** 2
    values = []
    for y in range(a.shape[0] - size + 1):
        for x in range(a.shape[1] - size + 1):
            pa, pb = a[y:y + size, x:x + size], b[y:y + size, x:x + size]
            mu_a, mu_b = (w * pa).sum(), (w * pb).sum()
            var_a = (w * pa * pa).sum() - mu_a ** 2
            var_b = (w * pb * pb).sum() - mu_b ** 2
            cov = (w * pa * pb).sum() - mu_a * mu_b
            values.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(values))


class TestPsnr:
    def test_identical_images_are_capped(self, rng):
        image = rng.random((8, 8))
        assert psnr(image, image) == PSNR_CAP_DB == 99.0

    def test_uniform_offset(self):
        a = np.zeros((4, 4))
        assert psnr(a, a + 16 / 255) == pytest.approx(20 * math.log10(255 / 16))
        assert psnr(a, a + 16 / 255) == pytest.approx(24.0484, abs=1e-4)

    def test_single_full_scale_pixel(self):
        a = np.zeros((10, 10))
        b = a.copy()
        b[3, 4] = 1.0
        assert psnr(a, b) == pytest.approx(10 * math.log10(100))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_decreases_with_noise(self, rng):
        image = rng.random((32, 32))
        scores = [psnr(image, image + s * rng.standard_normal(image.shape)) for s in (0.01, 0.05, 0.2)]
        assert scores[0] > scores[1] > scores[2]


class TestSsim:
    def test_identity(self, rng):
        image = rng.random((16, 16))
        assert ssim(image, image) == 1.0

    def test_constant_images(self):
        a, b = np.full((11, 11), 0.2), np.full((11, 11), 0.6)
        c1 = 0.01 ** 2
        expected = (2 * 0.2 * 0.6 + c1) / (0.2 ** 2 + 0.6 ** 2 + c1)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-10)

    def test_matches_sliding_window(self, rng):
        for _ in range(10):
            a = rng.random((16, 14))
            b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
            assert ssim(a, b) == pytest.approx(brute_force_ssim(a, b), abs=1e-8)

    def test_symmetric(self, rng):
        a, b = rng.random((12, 12)), rng.random((12, 12))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_rgb_is_channel_mean(self, rng):
        a, b = rng.random((12, 12, 3)), rng.random((12, 12, 3))
        per_channel = [ssim(a[..., c], b[..., c]) for c in range(3)]
        assert ssim(a, b) == pytest.approx(np.mean(per_channel), abs=1e-12)

    def test_small_image(self):
        with pytest.raises(InputError):
            ssim(np.zeros((10, 16)), np.ones((10, 16)))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ssim(np.zeros((12, 12)), np.zeros((12, 13)))
