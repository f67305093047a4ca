"""Image quality metrics"""

import math

import numpy as np
from skimage.metrics import structural_similarity

from config import settings
from shared.exceptions import ValidationError
from shared.imaging.operators import Image, Measurement


def _same_shape(x: Image, ref: Image) -> None:
    if x.data.shape != ref.data.shape:
        raise ValidationError(f"image shapes differ: {x.data.shape} vs {ref.data.shape}")


def psnr(x: Image, ref: Image, peak: float = 1.0) -> float:
    """10·log10(peak² / MSE) in dB, capped when the images are (nearly) identical"""
    _same_shape(x, ref)
    if not peak > 0:
        raise ValidationError(f"peak must be > 0, got {peak}")
    cap = settings.numerics.psnr_cap_db
    mse = float(np.mean((x.data - ref.data) ** 2))
    if mse < peak * peak * 1e-10:
        return cap
    return min(10.0 * math.log10(peak * peak / mse), cap)


def ssim(
    x: Image,
    ref: Image,
    peak: float = 1.0,
    sigma: float = 1.5,
    window: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean of the local SSIM map with a Gaussian window"""
    _same_shape(x, ref)
    if x.n < window:
        raise ValidationError(f"image side {x.n} is smaller than the {window}-pixel SSIM window")
    if not peak > 0:
        raise ValidationError(f"peak must be > 0, got {peak}")
    # skimage derives the Gaussian window from sigma alone (radius int(3.5·sigma + 0.5))
    if 2 * int(3.5 * sigma + 0.5) + 1 > window:
        sigma = (window // 2) / 3.5
    value = structural_similarity(
        x.data,
        ref.data,
        win_size=window,
        gaussian_weights=True,
        sigma=sigma,
        use_sample_covariance=False,
        data_range=peak,
        K1=k1,
        K2=k2,
    )
    return float(np.clip(value, -1.0, 1.0))


def l1_residual(y: Measurement, predicted: np.ndarray, per_entry: bool = False) -> float:
    """||y - A(x_hat)||_1 over the real range layout"""
    diff = np.abs(y.to_real() - predicted)
    return float(diff.mean() if per_entry else diff.sum())
