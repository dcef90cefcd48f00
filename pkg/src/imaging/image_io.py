"""8-bit RGB PNG read/write.

Images are held as float arrays of shape (H, W, 3) with values in [0, 1].
"""

import os
from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image as PILImage

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PNG_COLOR_RGB = 2

PathLike = Union[str, os.PathLike]


class ImageFormatError(ValueError):
    """PNG file is unreadable, not RGB, or not 8 bits per channel."""


def validate_image(img: np.ndarray, what: str = "image") -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{what} must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{what} must be at least 1x1, got {img.shape[:2]}")
    return img


def _read_ihdr(path: PathLike):
    with open(path, "rb") as f:
        head = f.read(33)
    if len(head) < 33 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise ImageFormatError(f"{path}: not a PNG file")
    bit_depth = head[24]
    color_type = head[25]
    return bit_depth, color_type


def load_png(path: PathLike) -> np.ndarray:
    if not os.path.exists(path):
        raise FileNotFoundError(f"PNG not found: {path}")
    bit_depth, color_type = _read_ihdr(path)
    if color_type != PNG_COLOR_RGB:
        raise ImageFormatError(f"{path}: expected RGB PNG (color type 2), got color type {color_type}")
    if bit_depth != 8:
        raise ImageFormatError(f"{path}: expected 8-bit channels, got bit depth {bit_depth}")
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode != "RGB":
                raise ImageFormatError(f"{path}: decoded mode {im.mode}, expected RGB")
            data = np.asarray(im, dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as e:
        raise ImageFormatError(f"{path}: could not decode PNG: {e}") from e
    return data.astype(np.float64) / 255.0


def to_bytes(img: np.ndarray) -> np.ndarray:
    validate_image(img)
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_png(img: np.ndarray, path: PathLike):
    data = to_bytes(img)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(data).save(path, format="PNG")


def list_pngs(directory: PathLike) -> List[Path]:
    """PNG files of `directory` in sorted name order."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"image directory not found: {directory}")
    return sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")


__all__ = [
    "ImageFormatError",
    "load_png",
    "save_png",
    "to_bytes",
    "list_pngs",
    "validate_image",
]
