import numpy as np
import pytest

from miqabench.core import ValidationError
from miqabench.degradation import apply_distortion
from miqabench.fidelity import fidelity, psnr, ssim

from conftest import make_test_image
from oracles import naive_ssim


class TestPsnr:
    def test_identical_images_hit_the_cap(self, test_image):
        assert psnr(test_image, test_image) == 100.0

    def test_one_grey_level_apart(self):
        a = np.full((10, 10, 3), 100, np.uint8)
        b = np.full((10, 10, 3), 101, np.uint8)
        # MSE is exactly 1, so PSNR is 20*log10(255)
        assert psnr(a, b) == pytest.approx(48.130803608679074, abs=1e-9)

    def test_black_vs_white_is_zero(self):
        a = np.zeros((4, 4, 3), np.uint8)
        b = np.full((4, 4, 3), 255, np.uint8)
        assert psnr(a, b) == 0.0

    def test_dimension_mismatch(self, test_image):
        with pytest.raises(ValidationError):
            psnr(test_image, test_image[:32])


class TestSsim:
    def test_identical_images(self, test_image):
        assert ssim(test_image, test_image) == 1.0

    def test_never_exceeds_one_even_inverted(self, test_image):
        value = ssim(test_image, 255 - test_image)
        assert value <= 1.0

    def test_symmetry(self, test_image):
        noisy = apply_distortion(test_image, "gaussian_noise", 3, seed=1)
        assert ssim(test_image, noisy) == pytest.approx(ssim(noisy, test_image), abs=1e-12)

    def test_matches_double_loop_oracle(self, test_image):
        noisy = apply_distortion(test_image, "gaussian_noise", 2, seed=8)
        assert ssim(test_image, noisy) == pytest.approx(
            naive_ssim(test_image, noisy), abs=1e-9
        )

    def test_rejects_images_smaller_than_window(self):
        tiny = make_test_image(10, 30, key=0)
        with pytest.raises(ValidationError):
            ssim(tiny, tiny)

    def test_fidelity_bundle(self, test_image):
        noisy = apply_distortion(test_image, "snow", 3, seed=1)
        score = fidelity(test_image, noisy)
        assert 0.0 <= score.psnr <= 100.0
        assert score.ssim <= 1.0


def test_corpus_ssim_degrades_between_extreme_levels():
    from miqabench.core import DISTORTION_TYPES

    images = [make_test_image(64, 64, key=i) for i in range(4)]
    for dist_type in DISTORTION_TYPES:
        lo = np.median([ssim(im, apply_distortion(im, dist_type, 1, seed=2)) for im in images])
        hi = np.median([ssim(im, apply_distortion(im, dist_type, 5, seed=2)) for im in images])
        assert hi < lo, f"{dist_type}: median ssim did not drop ({lo} -> {hi})"
