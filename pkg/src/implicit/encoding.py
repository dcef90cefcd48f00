"""Pixel-center coordinates and the periodic spatial encoding.

Encoding layout for a 2-vector d and frequencies w_1..w_F:

    [sin(w_1 d_0), cos(w_1 d_0), ..., sin(w_F d_0), cos(w_F d_0),
     sin(w_1 d_1), cos(w_1 d_1), ..., sin(w_F d_1), cos(w_F d_1)]

i.e. axis-major, frequency-minor, sin before cos. Frequencies are shared by
both axes and are trainable.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from src.numerics import autodiff as ad

FREQ_INIT_SCHEMES = ("paper_2e_n", "pow2")

ArrayOrNode = Union[np.ndarray, ad.DiffNode]


def coord_grid(n: int) -> np.ndarray:
    """Centers of n equal cells spanning [-1, 1]."""
    if n < 1:
        raise ValueError(f"coord_grid: n must be >= 1, got {n}")
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


def init_frequencies(n_freqs: int, scheme: str = "paper_2e_n") -> np.ndarray:
    """Initial w_n for n = 1..F.

    "paper_2e_n": w_n = 2 * e**n (literal reading, w_12 ~ 3.3e5).
    "pow2":       w_n = 2**n.
    """
    n = np.arange(1, n_freqs + 1, dtype=np.float64)
    if scheme == "paper_2e_n":
        return 2.0 * np.exp(n)
    if scheme == "pow2":
        return 2.0**n
    raise ValueError(f"unknown freq_init '{scheme}', expected one of {FREQ_INIT_SCHEMES}")


@dataclass
class EncodingParams:
    freqs: np.ndarray

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs)
        if self.freqs.ndim != 1 or self.freqs.size < 1:
            raise ValueError(f"EncodingParams: freqs must be a non-empty vector, got {self.freqs.shape}")
        if not np.all(np.isfinite(self.freqs)) or np.any(self.freqs <= 0):
            raise ValueError("EncodingParams: freqs must be finite and > 0")

    @property
    def encoding_dim(self) -> int:
        return 4 * self.freqs.size

    @classmethod
    def initial(cls, encoding_dim: int, scheme: str = "paper_2e_n") -> "EncodingParams":
        if encoding_dim < 4 or encoding_dim % 4:
            raise ValueError(f"encoding_dim must be a positive multiple of 4, got {encoding_dim}")
        return cls(init_frequencies(encoding_dim // 4, scheme))


def encode_nodes(delta: ad.DiffNode, freqs: ad.DiffNode) -> ad.DiffNode:
    """Differentiable encoding of an (N, 2) node with an (F,) frequency node."""
    n = delta.shape[0]
    f = freqs.shape[0]
    phase = ad.multiply(ad.reshape(delta, (n, 2, 1)), ad.reshape(freqs, (1, 1, f)))
    pairs = ad.concat(
        [ad.reshape(ad.sin(phase), (n, 2, f, 1)), ad.reshape(ad.cos(phase), (n, 2, f, 1))]
    )
    return ad.reshape(pairs, (n, 4 * f))


def spatial_encoding(delta: ArrayOrNode, params: Union[EncodingParams, ad.DiffNode]) -> ArrayOrNode:
    """phi(delta) for one 2-vector or a (..., 2) batch.

    Returns a DiffNode when either input is one, otherwise an array.
    """
    freqs = params.freqs if isinstance(params, EncodingParams) else params
    as_node = isinstance(delta, ad.DiffNode) or isinstance(freqs, ad.DiffNode)
    d_node = delta if isinstance(delta, ad.DiffNode) else ad.constant(np.asarray(delta, dtype=np.float64))
    f_node = freqs if isinstance(freqs, ad.DiffNode) else ad.constant(np.asarray(freqs))
    if d_node.shape[-1:] != (2,):
        raise ValueError(f"spatial_encoding: delta must end in a 2-axis, got {d_node.shape}")
    lead = d_node.shape[:-1]
    flat = ad.reshape(d_node, (-1, 2)) if len(lead) != 1 else d_node
    out = encode_nodes(flat, f_node)
    out = ad.reshape(out, lead + (4 * f_node.shape[0],))
    return out if as_node else out.data


__all__ = [
    "FREQ_INIT_SCHEMES",
    "EncodingParams",
    "coord_grid",
    "init_frequencies",
    "encode_nodes",
    "spatial_encoding",
]
