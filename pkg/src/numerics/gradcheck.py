"""Central finite differences for checking analytic gradients."""

from typing import Callable, Iterable, Optional

import numpy as np


def numerical_grad(
    f: Callable[[], float],
    array: np.ndarray,
    h: float = 1e-4,
    indices: Optional[Iterable[tuple]] = None,
) -> np.ndarray:
    """Estimate df/d(array) by perturbing `array` in place.

    `f` must re-read `array` each call. When `indices` is given, only those
    entries are estimated; the rest of the result stays zero.
    """
    grad = np.zeros_like(array, dtype=np.float64)
    if indices is None:
        indices = np.ndindex(array.shape)
    for idx in indices:
        orig = array[idx]
        array[idx] = orig + h
        f_plus = f()
        array[idx] = orig - h
        f_minus = f()
        array[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error between two gradient estimates."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


__all__ = ["numerical_grad", "relative_error"]
