from typing import Tuple

import numpy as np

from src.imaging.image_io import validate_image
from src.imaging.resample import bicubic_resize


def hr_side(scale: float, lr_patch_size: int) -> int:
    return int(round(scale * lr_patch_size))


def make_lr_hr_pair(
    hr: np.ndarray, scale: float, lr_patch_size: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Random aligned HR crop of side round(scale * lr_patch_size) and its bicubic LR.

    Only one draw (the crop origin) is taken from `rng`.
    """
    validate_image(hr, "hr")
    if scale < 1:
        raise ValueError(f"make_lr_hr_pair: scale must be >= 1, got {scale}")
    if lr_patch_size < 1:
        raise ValueError(f"make_lr_hr_pair: lr_patch_size must be >= 1, got {lr_patch_size}")
    side = hr_side(scale, lr_patch_size)
    h, w = hr.shape[:2]
    if side > h or side > w:
        raise ValueError(
            f"make_lr_hr_pair: HR image {h}x{w} too small for a {side}x{side} crop "
            f"(scale {scale}, lr patch {lr_patch_size})"
        )
    top, left = rng.integers(0, [h - side + 1, w - side + 1])
    hr_patch = np.array(hr[top : top + side, left : left + side], dtype=np.float64)
    lr_patch = bicubic_resize(hr_patch, lr_patch_size, lr_patch_size)
    return lr_patch, hr_patch


__all__ = ["hr_side", "make_lr_hr_pair"]
