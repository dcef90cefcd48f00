"""PSNR and Laplacian sharpness statistics on unit-range RGB images.

PSNR is computed over all RGB channels with no border cropping.
"""

import math
from typing import Tuple

import numpy as np
from scipy import ndimage

from src.imaging.image_io import validate_image

# returned by psnr() when the two images are identical
PSNR_INF = math.inf

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def _check_pair(a: np.ndarray, b: np.ndarray, what: str):
    validate_image(a)
    validate_image(b)
    if a.shape != b.shape:
        raise ValueError(f"{what}: dimension mismatch {a.shape} vs {b.shape}")


def mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b, "mse")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(diff * diff))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b, "psnr")
    err = mse(a, b)
    if err == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(1.0 / err)


def laplacian(img: np.ndarray) -> np.ndarray:
    """Per-channel 3x3 Laplacian response, zero padded."""
    img = np.asarray(img, dtype=np.float64)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.correlate(img[:, :, c], LAPLACIAN_KERNEL, mode="constant", cval=0.0)
    return out


def laplacian_stats(img: np.ndarray, gt: np.ndarray) -> Tuple[float, float]:
    """(mean |L(img)|, mean |L(img) - L(gt)|)."""
    _check_pair(img, gt, "laplacian_stats")
    lap = laplacian(img)
    lap_gt = laplacian(gt)
    return float(np.mean(np.abs(lap))), float(np.mean(np.abs(lap - lap_gt)))


__all__ = ["PSNR_INF", "LAPLACIAN_KERNEL", "mse", "psnr", "laplacian", "laplacian_stats"]
