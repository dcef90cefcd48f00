"""Bias-corrected ADAM over named parameter arrays."""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np


class NonFiniteError(FloatingPointError):
    """A gradient or loss is NaN or infinite."""


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            t=self.t,
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
        )


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """Apply one update. Inputs are left untouched; new arrays are returned.

    Parameters without an entry in `grads` are treated as having zero gradient.
    """
    if state.t < 0:
        raise ValueError(f"adam_step: step counter must be >= 0, got {state.t}")
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"adam_step: gradient for unknown parameter '{name}'")
        if g.shape != params[name].shape:
            raise ValueError(
                f"adam_step: gradient for '{name}' has shape {g.shape}, parameter has {params[name].shape}"
            )
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"adam_step: non-finite gradient for parameter '{name}'")

    new_state = state.copy()
    new_state.t = state.t + 1
    bc1 = 1.0 - state.beta1**new_state.t
    bc2 = 1.0 - state.beta2**new_state.t

    new_params: Dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        m = new_state.m.get(name)
        v = new_state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = (p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
            p.dtype, copy=False
        )
        new_state.m[name] = m.astype(p.dtype, copy=False)
        new_state.v[name] = v.astype(p.dtype, copy=False)
    return new_params, new_state


__all__ = ["AdamState", "adam_step", "NonFiniteError"]
