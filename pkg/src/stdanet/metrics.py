"""Image quality metrics on ``[C, H, W]`` (or ``[H, W]``) arrays with dynamic range 1."""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from stdanet.config import MESSAGES
from stdanet.exceptions import ShapeMismatchError
from stdanet.tensor import Tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _array(image) -> np.ndarray:
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    return data.astype(np.float64)


def _pair(a, b, op: str) -> tuple[np.ndarray, np.ndarray]:
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(MESSAGES["shape_mismatch"].format(op=op, detail=f"{a.shape} vs {b.shape}"))
    return a, b


def psnr(a, b) -> float:
    """``10 * log10(1 / mse)``; identical images give ``inf``."""
    a, b = _pair(a, b, "psnr")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian; the 2-D window is its outer product."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    rows = sliding_window_view(image, kernel.size, axis=-1) @ kernel
    return sliding_window_view(rows, kernel.size, axis=-2) @ kernel


def ssim(a, b) -> float:
    """
    Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03.

    Only fully covered window positions are used; the map is averaged over positions and channels.

    :raises ShapeMismatchError: If the shapes differ or a spatial dim is below 11.
    """
    a, b = _pair(a, b, "ssim")
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3 or min(a.shape[-2:]) < SSIM_WINDOW:
        raise ShapeMismatchError(
            MESSAGES["shape_mismatch"].format(op="ssim", detail=f"image {a.shape} smaller than {SSIM_WINDOW}x{SSIM_WINDOW}")
        )
    kernel = gaussian_window()
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    mu_a, mu_b = _filter_valid(a, kernel), _filter_valid(b, kernel)
    var_a = _filter_valid(a * a, kernel) - mu_a**2
    var_b = _filter_valid(b * b, kernel) - mu_b**2
    cov = _filter_valid(a * b, kernel) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_or_nan(a, b) -> float:
    """:func:`ssim`, or NaN for frames smaller than the SSIM window."""
    shape = _array(a).shape
    if len(shape) >= 2 and min(shape[-2:]) < SSIM_WINDOW:
        return math.nan
    return ssim(a, b)
