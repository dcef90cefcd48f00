"""Separable cubic-convolution resampling with downscale antialiasing.

This is the only degradation path in the repo: training pairs, evaluation
inputs and the bicubic baseline all go through `bicubic_resize`.
"""

import math
from functools import lru_cache

import numpy as np

from src.imaging.image_io import validate_image

CUBIC_A = -0.5
CUBIC_SUPPORT = 2.0


def cubic_kernel(x, a: float = CUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2) * x3 - (a + 3) * x2 + 1
    far = a * x3 - 5 * a * x2 + 8 * a * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


@lru_cache(maxsize=64)
def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) weights mapping one axis of n_in samples to n_out.

    Output sample j sits at source position (j + 0.5) * n_in / n_out - 0.5.
    When shrinking, the kernel is stretched by n_in / n_out. Taps falling
    outside the input are dropped and the remaining weights renormalized.
    """
    scale = n_out / n_in
    stretch = 1.0 / scale if scale < 1 else 1.0
    radius = CUBIC_SUPPORT * stretch
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    for j in range(n_out):
        center = (j + 0.5) / scale - 0.5
        lo = max(0, int(math.floor(center - radius)))
        hi = min(n_in - 1, int(math.ceil(center + radius)))
        taps = np.arange(lo, hi + 1)
        w = cubic_kernel((taps - center) / stretch)
        total = w.sum()
        if abs(total) < 1e-12:
            nearest = min(max(int(round(center)), 0), n_in - 1)
            weights[j, nearest] = 1.0
            continue
        weights[j, lo : hi + 1] = w / total
    weights.setflags(write=False)
    return weights


def bicubic_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    validate_image(img)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"bicubic_resize: output size must be >= 1, got {out_h}x{out_w}")
    h, w = img.shape[:2]
    wy = resample_matrix(h, int(out_h))
    wx = resample_matrix(w, int(out_w))
    out = np.einsum("ih,hwc,jw->ijc", wy, np.asarray(img, dtype=np.float64), wx, optimize=True)
    return np.clip(out, 0.0, 1.0)


def center_crop(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = img.shape[:2]
    if out_h > h or out_w > w:
        raise ValueError(f"center_crop: {out_h}x{out_w} does not fit in {h}x{w}")
    top = (h - out_h) // 2
    left = (w - out_w) // 2
    return img[top : top + out_h, left : left + out_w]


__all__ = ["cubic_kernel", "resample_matrix", "bicubic_resize", "center_crop"]
