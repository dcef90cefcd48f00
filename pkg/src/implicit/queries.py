"""Feature unfolding, local-ensemble geometry and decoder query bundles.

Coordinates are (row, col) pairs in [-1, 1]^2. For a feature grid of N cells
along an axis, a target x lies at continuous index u = (x + 1) * N / 2 - 0.5,
so feature centers sit on integers. The four neighbors of a target are the
ideal indices floor(u) and floor(u) + 1 on each axis, ordered

    k = 0: (lo, lo)   k = 1: (lo, hi)   k = 2: (hi, lo)   k = 3: (hi, hi)

so neighbor k is diagonally opposite neighbor 3 - k. Relative coordinates are
u minus the ideal index (nearest-cell units), which keeps them in [-1, 1] even
when the index is clamped into the grid for the feature lookup.
"""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.implicit.encoding import EncodingParams, spatial_encoding
from src.numerics import autodiff as ad

NEIGHBOR_OFFSETS = np.array([[0, 0], [0, 1], [1, 0], [1, 1]])
DEGENERATE_AREA = 1e-9


@dataclass
class QueryBundle:
    """Decoder inputs. Leading dims are shared by all fields."""

    feature: np.ndarray
    rel_coord: np.ndarray
    encoding: Optional[np.ndarray]
    cell: np.ndarray


@dataclass
class QueryPlan:
    """Index/geometry half of query construction, shape-only in the feature map.

    rows: (4, N) flat feature indices (row * W + col), clamped into the grid
    rel_coord: (4, N, 2); cell: (N, 2); weights: (4, N)
    """

    rows: np.ndarray
    rel_coord: np.ndarray
    cell: np.ndarray
    weights: np.ndarray

    @property
    def n_targets(self) -> int:
        return self.cell.shape[0]


def unfold3x3(fm: Union[np.ndarray, ad.DiffNode]):
    """(C,H,W) -> (9C,H,W): each position gets its zero-padded 3x3 neighborhood.

    Slot k*C + c holds channel c of neighbor k = 3*(dy+1) + (dx+1); k = 4 is
    the position itself.
    """
    if isinstance(fm, ad.DiffNode):
        return ad.unfold3x3(fm)
    return ad.unfold3x3(ad.constant(np.asarray(fm))).data


def ensemble_weights(query, neighbors) -> np.ndarray:
    """Area weights for the 4 neighbors of a query, ordered as NEIGHBOR_OFFSETS.

    Neighbor k is weighted by the area of the rectangle spanned by the query
    and neighbor 3 - k. Accepts a single (2,) query with (4, 2) neighbors or
    batches (..., 2) / (..., 4, 2).
    """
    q = np.asarray(query, dtype=np.float64)
    nb = np.asarray(neighbors, dtype=np.float64)
    if nb.shape[-2:] != (4, 2) or q.shape[-1] != 2:
        raise ValueError(f"ensemble_weights: expected (...,2) and (...,4,2), got {q.shape}, {nb.shape}")
    diff = np.abs(q[..., None, :] - nb)
    areas = diff[..., 0] * diff[..., 1]
    total = areas.sum(axis=-1, keepdims=True)
    safe = np.where(total < DEGENERATE_AREA, 1.0, total)
    weights = areas[..., ::-1] / safe
    degenerate = total[..., 0] < DEGENERATE_AREA
    if np.any(degenerate):
        nearest = np.argmin(np.sum(diff * diff, axis=-1), axis=-1)
        one_hot = np.eye(4)[nearest]
        weights = np.where(degenerate[..., None], one_hot, weights)
    return weights


def _continuous_index(x: np.ndarray, n: int) -> np.ndarray:
    u = (x + 1.0) * n / 2.0 - 0.5
    snapped = np.round(u)
    return np.where(np.abs(u - snapped) < 1e-9, snapped, u)


def plan_queries(
    grid_hw: Tuple[int, int], targets: np.ndarray, out_dims: Tuple[int, int]
) -> QueryPlan:
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    if targets.size and (np.any(targets < -1.0) or np.any(targets > 1.0) or not np.all(np.isfinite(targets))):
        bad = targets[np.any((targets < -1.0) | (targets > 1.0) | ~np.isfinite(targets), axis=1)][0]
        raise ValueError(f"build_queries: target {tuple(bad)} outside [-1, 1]^2")
    h, w = grid_hw
    out_h, out_w = out_dims
    if h < 1 or w < 1 or out_h < 1 or out_w < 1:
        raise ValueError(f"build_queries: invalid grid {grid_hw} or output dims {out_dims}")

    u = np.stack([_continuous_index(targets[:, 0], h), _continuous_index(targets[:, 1], w)], axis=1)
    lo = np.floor(u).astype(np.int64)
    ideal = lo[None, :, :] + NEIGHBOR_OFFSETS[:, None, :]
    rel = u[None, :, :] - ideal
    clamped_r = np.clip(ideal[..., 0], 0, h - 1)
    clamped_c = np.clip(ideal[..., 1], 0, w - 1)
    rows = clamped_r * w + clamped_c
    weights = ensemble_weights(u, np.transpose(ideal, (1, 0, 2)).astype(np.float64)).T
    cell = np.tile(np.array([h / out_h, w / out_w]), (targets.shape[0], 1))
    return QueryPlan(rows=rows, rel_coord=rel, cell=cell, weights=np.ascontiguousarray(weights))


def build_queries(
    fm: np.ndarray,
    targets,
    out_dims: Tuple[int, int],
    params: Optional[EncodingParams],
    unfold: bool = True,
) -> Tuple[QueryBundle, np.ndarray]:
    """Bundles for every (neighbor, target) pair plus ensemble weights.

    Returns a QueryBundle whose fields lead with (4, N) and weights (4, N).
    `fm` is the encoder output; it is unfolded here unless `unfold` is False.
    Pass params=None to skip the encoding.
    """
    fm = np.asarray(fm)
    table = unfold3x3(fm) if unfold else fm
    c, h, w = table.shape
    plan = plan_queries((h, w), targets, out_dims)
    flat = table.reshape(c, h * w).T
    feature = flat[plan.rows]
    encoding = spatial_encoding(plan.rel_coord, params) if params is not None else None
    cell = np.broadcast_to(plan.cell, plan.rel_coord.shape).copy()
    bundle = QueryBundle(feature=feature, rel_coord=plan.rel_coord, encoding=encoding, cell=cell)
    return bundle, plan.weights


__all__ = [
    "NEIGHBOR_OFFSETS",
    "QueryBundle",
    "QueryPlan",
    "unfold3x3",
    "ensemble_weights",
    "plan_queries",
    "build_queries",
]
