import math

import numpy as np
import pytest

from stdanet.exceptions import ShapeMismatchError
from stdanet.metrics import gaussian_window, psnr, ssim, ssim_or_nan
from stdanet.tensor import Tensor
from tests import oracles


def test_psnr_of_a_uniform_difference_is_twenty_db():
    assert psnr(np.zeros((3, 8, 8)), np.full((3, 8, 8), 0.1)) == pytest.approx(20.0, abs=1e-9)


def test_psnr_of_identical_images_is_infinite(rng):
    image = rng.uniform(size=(3, 8, 8))

    assert psnr(image, image.copy()) == math.inf


def test_psnr_accepts_tensors(rng):
    a, b = rng.uniform(size=(2, 3, 8, 8))

    assert psnr(Tensor(a), Tensor(b)) == pytest.approx(psnr(a, b))


def test_gaussian_window_is_normalised():
    window = gaussian_window()

    assert window.shape == (11,)
    assert window.sum() == pytest.approx(1.0)
    assert window.argmax() == 5


def test_ssim_of_identical_images_is_one(rng):
    image = rng.uniform(size=(3, 16, 16))

    assert ssim(image, image.copy()) == pytest.approx(1.0, abs=1e-12)


def test_ssim_of_inverted_images_is_negative(rng):
    image = rng.uniform(size=(3, 16, 16))

    assert ssim(image, 1.0 - image) < 0


def test_ssim_matches_the_window_by_window_oracle(rng):
    a, b = rng.uniform(size=(2, 3, 32, 32))

    assert ssim(a, b) == pytest.approx(oracles.ssim(a, b), abs=1e-6)


def test_ssim_accepts_single_channel_images(rng):
    a, b = rng.uniform(size=(2, 16, 16))

    assert ssim(a, b) == pytest.approx(ssim(a[None], b[None]))


@pytest.mark.parametrize("shape_a, shape_b", [((3, 16, 16), (3, 16, 15)), ((3, 10, 16), (3, 10, 16))])
def test_ssim_rejects_bad_shapes(shape_a, shape_b):
    with pytest.raises(ShapeMismatchError):
        ssim(np.zeros(shape_a), np.zeros(shape_b))


def test_psnr_rejects_mismatched_shapes():
    with pytest.raises(ShapeMismatchError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


def test_ssim_or_nan_below_the_window(rng):
    small = rng.uniform(size=(3, 8, 8))
    large = rng.uniform(size=(3, 12, 12))

    assert math.isnan(ssim_or_nan(small, small))
    assert ssim_or_nan(large, large) == pytest.approx(1.0)
