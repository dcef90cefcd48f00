"""Seeded procedural HR corpus.

Each image blends sinusoidal gratings at several frequencies/orientations,
a checkerboard and a smooth color gradient. High-frequency structure is
what the periodic encoding is meant to recover, so every image carries some.
"""

import logging
from pathlib import Path
from typing import List

import numpy as np

from src.imaging.image_io import save_png

logger = logging.getLogger(__name__)

DEFAULT_COUNT = 16
DEFAULT_SIZE = 96


def _grating(yy, xx, rng: np.random.Generator) -> np.ndarray:
    period = rng.uniform(3.0, 24.0)
    theta = rng.uniform(0.0, np.pi)
    phase = rng.uniform(0.0, 2 * np.pi)
    u = xx * np.cos(theta) + yy * np.sin(theta)
    return 0.5 + 0.5 * np.sin(2 * np.pi * u / period + phase)


def _checkerboard(yy, xx, rng: np.random.Generator) -> np.ndarray:
    cell = int(rng.integers(4, 17))
    oy, ox = rng.integers(0, cell, size=2)
    return (((yy + oy) // cell + (xx + ox) // cell) % 2).astype(np.float64)


def _gradient(yy, xx, size: int, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2 * np.pi)
    u = (xx * np.cos(theta) + yy * np.sin(theta)) / max(size - 1, 1)
    return (u - u.min()) / max(float(np.ptp(u)), 1e-12)


def synth_image(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3))
    n_gratings = int(rng.integers(2, 5))
    for _ in range(n_gratings):
        color = rng.uniform(0.2, 1.0, size=3)
        img += rng.uniform(0.2, 0.6) * _grating(yy, xx, rng)[..., None] * color
    if rng.random() < 0.75:
        color = rng.uniform(0.2, 1.0, size=3)
        img += rng.uniform(0.2, 0.6) * _checkerboard(yy, xx, rng)[..., None] * color
    low = rng.uniform(0.0, 0.5, size=3)
    high = rng.uniform(0.5, 1.0, size=3)
    grad = _gradient(yy, xx, size, rng)[..., None]
    img += low + (high - low) * grad
    lo = img.min(axis=(0, 1), keepdims=True)
    hi = img.max(axis=(0, 1), keepdims=True)
    return (img - lo) / np.maximum(hi - lo, 1e-12)


def make_dataset(
    out_dir, count: int = DEFAULT_COUNT, size: int = DEFAULT_SIZE, seed: int = 0
) -> List[Path]:
    if count < 1 or size < 1:
        raise ValueError(f"make_dataset: count and size must be >= 1, got {count}, {size}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        path = out / f"img_{i:04d}.png"
        save_png(synth_image(size, rng), path)
        paths.append(path)
    logger.info("wrote %d synthetic %dx%d images to %s", count, size, size, out)
    return paths


__all__ = ["synth_image", "make_dataset", "DEFAULT_COUNT", "DEFAULT_SIZE"]
