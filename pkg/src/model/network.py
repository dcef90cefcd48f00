"""Residual conv encoder and the coordinate-fused ResMLP decoder.

Decoder layout for hidden_layers = L:

    layer 0        input_width            -> hidden_width, relu
    layers 1..L    hidden_width (+ coords) -> hidden_width, relu
    layer L+1      hidden_width            -> 3, linear

With fusion (C) the coordinate bundle [delta, phi(delta)] is concatenated onto
the input of layers 1..L. With residual links (R) the hidden state entering
layer k is added to the pre-activation of layer k+1 for k = 1, 3, 5, ...
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.device import resolve_threads
from src.implicit.encoding import coord_grid, encode_nodes as periodic_encoding, init_frequencies
from src.implicit.queries import QueryBundle, QueryPlan, plan_queries
from src.imaging.image_io import validate_image
from src.model.config import ModelConfig
from src.numerics import autodiff as ad
from src.numerics.autodiff import DiffNode, ShapeError

logger = logging.getLogger(__name__)

RENDER_CHUNK = int(os.getenv("ULTRASR_RENDER_CHUNK", 4096))

ModelParams = Dict[str, np.ndarray]


# --------------------------------------------------------------------------
# parameter layout
# --------------------------------------------------------------------------


def encoder_shapes(cfg: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    c = cfg.enc_channels
    shapes = [("enc.head.w", (c, 3, 3, 3)), ("enc.head.b", (c,))]
    for i in range(cfg.enc_blocks):
        for j in (1, 2):
            shapes.append((f"enc.block{i}.conv{j}.w", (c, c, 3, 3)))
            shapes.append((f"enc.block{i}.conv{j}.b", (c,)))
    return shapes


def decoder_layer_widths(cfg: ModelConfig) -> List[Tuple[int, int]]:
    """(in, out) per decoder layer, input layer first, output layer last."""
    hidden_in = cfg.hidden_width + (cfg.coord_width if cfg.use_fusion else 0)
    widths = [(cfg.input_width, cfg.hidden_width)]
    widths += [(hidden_in, cfg.hidden_width)] * cfg.hidden_layers
    widths.append((cfg.hidden_width, 3))
    return widths


def param_shapes(cfg: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes = encoder_shapes(cfg)
    for i, (fan_in, fan_out) in enumerate(decoder_layer_widths(cfg)):
        shapes.append((f"dec.layer{i}.w", (fan_in, fan_out)))
        shapes.append((f"dec.layer{i}.b", (fan_out,)))
    if cfg.use_encoding:
        shapes.append(("freqs", (cfg.encoding_dim // 4,)))
    return shapes


def param_count(cfg: ModelConfig) -> int:
    return int(sum(np.prod(shape) for _, shape in param_shapes(cfg)))


def fusion_param_delta(cfg: ModelConfig) -> int:
    """Weights added by coordinate fusion: hidden_layers x coord_width x hidden_width."""
    return cfg.hidden_layers * cfg.coord_width * cfg.hidden_width


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float64) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases of every layer."""
    shapes = param_shapes(cfg)
    weight_shapes = {name[:-2]: shape for name, shape in shapes if name.endswith(".w")}
    params: ModelParams = {}
    for name, shape in shapes:
        if name == "freqs":
            params[name] = init_frequencies(shape[0], cfg.freq_init).astype(dtype)
            continue
        weight_shape = weight_shapes[name.rsplit(".", 1)[0]]
        fan_in = int(np.prod(weight_shape[1:])) if name.startswith("enc.") else weight_shape[0]
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


def check_params(params: ModelParams, cfg: ModelConfig):
    expected = dict(param_shapes(cfg))
    missing = sorted(set(expected) - set(params))
    extra = sorted(set(params) - set(expected))
    if missing or extra:
        raise ShapeError(f"parameter set does not match config: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"parameter '{name}' has shape {params[name].shape}, expected {shape}")


def as_nodes(params: ModelParams, trainable: bool) -> Dict[str, DiffNode]:
    if trainable:
        return {k: ad.leaf(v, name=k) for k, v in params.items()}
    return {k: ad.constant(v) for k, v in params.items()}


def _dtype(nodes: Dict[str, DiffNode]):
    return nodes["dec.layer0.w"].data.dtype


# --------------------------------------------------------------------------
# encoder
# --------------------------------------------------------------------------


def _conv(x: DiffNode, nodes: Dict[str, DiffNode], prefix: str) -> DiffNode:
    bias = nodes[f"{prefix}.b"]
    return ad.add(ad.conv2d(x, nodes[f"{prefix}.w"]), ad.reshape(bias, (bias.shape[0], 1, 1)))


def encode_nodes(x: DiffNode, nodes: Dict[str, DiffNode], cfg: ModelConfig) -> DiffNode:
    """(B,3,H,W) or (3,H,W) image node -> feature node with enc_channels channels."""
    h = _conv(x, nodes, "enc.head")
    for i in range(cfg.enc_blocks):
        r = ad.relu(_conv(h, nodes, f"enc.block{i}.conv1"))
        r = _conv(r, nodes, f"enc.block{i}.conv2")
        h = ad.add(h, r)
    return h


def encode(lr: np.ndarray, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """LR image (H,W,3) -> feature map (enc_channels, H, W)."""
    validate_image(lr, "lr")
    nodes = as_nodes(params, trainable=False)
    x = ad.constant(np.transpose(lr, (2, 0, 1)).astype(_dtype(nodes)))
    return encode_nodes(x, nodes, cfg).data


def feature_table(fm: DiffNode) -> DiffNode:
    """(C,H,W) or (B,C,H,W) feature node -> (B*H*W, 9C) unfolded rows."""
    unfolded = ad.unfold3x3(fm)
    if len(unfolded.shape) == 3:
        c9, h, w = unfolded.shape
        return ad.reshape(ad.transpose(unfolded, (1, 2, 0)), (h * w, c9))
    b, c9, h, w = unfolded.shape
    return ad.reshape(ad.transpose(unfolded, (0, 2, 3, 1)), (b * h * w, c9))


# --------------------------------------------------------------------------
# decoder
# --------------------------------------------------------------------------


def _linear(x: DiffNode, nodes: Dict[str, DiffNode], index: int) -> DiffNode:
    w = nodes[f"dec.layer{index}.w"]
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"decoder layer {index}: input width {x.shape[-1]}, expected {w.shape[0]}")
    return ad.add(ad.matmul(x, w), nodes[f"dec.layer{index}.b"])


def coord_bundle(rel: DiffNode, nodes: Dict[str, DiffNode], cfg: ModelConfig) -> DiffNode:
    if not cfg.use_encoding:
        return rel
    return ad.concat([rel, periodic_encoding(rel, nodes["freqs"])])


def decode_nodes(
    feature: DiffNode, coords: DiffNode, cell: DiffNode, nodes: Dict[str, DiffNode], cfg: ModelConfig
) -> DiffNode:
    """(M, 9C), (M, coord_width), (M, 2) -> (M, 3) unclamped RGB."""
    if coords.shape[-1] != cfg.coord_width:
        raise ShapeError(
            f"decoder layer 0: coordinate bundle width {coords.shape[-1]}, expected {cfg.coord_width}"
        )
    h = ad.relu(_linear(ad.concat([feature, coords, cell]), nodes, 0))
    states = [h]
    for k in range(1, cfg.hidden_layers + 1):
        inp = ad.concat([h, coords]) if cfg.use_fusion else h
        z = _linear(inp, nodes, k)
        if cfg.use_residual and k % 2 == 0:
            z = ad.add(z, states[k - 2])
        h = ad.relu(z)
        states.append(h)
    return _linear(h, nodes, cfg.hidden_layers + 1)


def decode(bundle: QueryBundle, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Decode one bundle (vectors) or a batch (leading dims shared by all fields)."""
    nodes = as_nodes(params, trainable=False)
    dtype = _dtype(nodes)
    lead = np.shape(bundle.rel_coord)[:-1]
    feature = np.asarray(bundle.feature, dtype=dtype).reshape(-1, np.shape(bundle.feature)[-1])
    rel = np.asarray(bundle.rel_coord, dtype=dtype).reshape(-1, 2)
    cell = np.asarray(bundle.cell, dtype=dtype).reshape(-1, 2)
    parts = [rel]
    if cfg.use_encoding:
        if bundle.encoding is None:
            raise ShapeError("decoder layer 0: config uses the spatial encoding but the bundle has none")
        parts.append(np.asarray(bundle.encoding, dtype=dtype).reshape(rel.shape[0], -1))
    coords = ad.constant(np.concatenate(parts, axis=-1))
    out = decode_nodes(ad.constant(feature), coords, ad.constant(cell), nodes, cfg).data
    return out.reshape(lead + (3,))


# --------------------------------------------------------------------------
# queries and rendering
# --------------------------------------------------------------------------


def merge_plans(plans: Sequence[QueryPlan], row_offsets: Sequence[int]) -> QueryPlan:
    return QueryPlan(
        rows=np.concatenate([p.rows + off for p, off in zip(plans, row_offsets)], axis=1),
        rel_coord=np.concatenate([p.rel_coord for p in plans], axis=1),
        cell=np.concatenate([p.cell for p in plans], axis=0),
        weights=np.concatenate([p.weights for p in plans], axis=1),
    )


def predict_nodes(
    table: DiffNode, plan: QueryPlan, nodes: Dict[str, DiffNode], cfg: ModelConfig
) -> DiffNode:
    """Local-ensemble RGB (N, 3) for the planned targets, all 4 neighbors in one pass."""
    dtype = _dtype(nodes)
    n = plan.n_targets
    feature = ad.gather(table, plan.rows.reshape(-1))
    rel = ad.constant(plan.rel_coord.reshape(-1, 2).astype(dtype))
    cell = ad.constant(np.broadcast_to(plan.cell, (4, n, 2)).reshape(-1, 2).astype(dtype))
    rgb = decode_nodes(feature, coord_bundle(rel, nodes, cfg), cell, nodes, cfg)
    weighted = ad.multiply(ad.reshape(rgb, (4, n, 3)), ad.constant(plan.weights[..., None].astype(dtype)))
    return ad.sum_(weighted, axis=0)


def pixel_centers(out_h: int, out_w: int) -> np.ndarray:
    """(out_h * out_w, 2) row-major (row, col) centers."""
    rr, cc = np.meshgrid(coord_grid(out_h), coord_grid(out_w), indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


@dataclass(frozen=True)
class EncodedImage:
    """An LR image run through the encoder once, ready for any number of point queries."""

    table: DiffNode
    grid_hw: Tuple[int, int]
    nodes: Dict[str, DiffNode]
    cfg: ModelConfig


def encode_image(lr: np.ndarray, params: ModelParams, cfg: ModelConfig) -> EncodedImage:
    fm = encode(lr, params, cfg)
    nodes = as_nodes(params, trainable=False)
    return EncodedImage(feature_table(ad.constant(fm)), tuple(fm.shape[1:]), nodes, cfg)


def query_rgb(encoded: EncodedImage, targets: np.ndarray, out_dims: Tuple[int, int]) -> np.ndarray:
    """Unclamped RGB at arbitrary target coordinates for a rendering of size out_dims."""
    plan = plan_queries(encoded.grid_hw, targets, out_dims)
    return predict_nodes(encoded.table, plan, encoded.nodes, encoded.cfg).data


def render(
    lr: np.ndarray,
    out_h: int,
    out_w: int,
    params: ModelParams,
    cfg: ModelConfig,
    threads: Optional[int] = None,
) -> np.ndarray:
    """Super-resolve `lr` to (out_h, out_w, 3), clamped to [0, 1].

    Target pixels are split into chunks of RENDER_CHUNK and evaluated on a
    thread pool; chunks are reassembled in order so output is deterministic.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"render: output size must be >= 1, got {out_h}x{out_w}")
    encoded = encode_image(lr, params, cfg)
    targets = pixel_centers(out_h, out_w)
    chunks = [targets[i : i + RENDER_CHUNK] for i in range(0, len(targets), RENDER_CHUNK)]

    def work(chunk: np.ndarray) -> np.ndarray:
        return query_rgb(encoded, chunk, (out_h, out_w))

    workers = min(resolve_threads(threads), len(chunks))
    if workers <= 1:
        parts = [work(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    logger.debug("rendered %dx%d from %dx%d in %d chunk(s)", out_h, out_w, *encoded.grid_hw, len(chunks))
    out = np.concatenate(parts, axis=0).reshape(out_h, out_w, 3)
    return np.clip(out.astype(np.float64), 0.0, 1.0)


__all__ = [
    "ModelParams",
    "RENDER_CHUNK",
    "param_shapes",
    "param_count",
    "fusion_param_delta",
    "decoder_layer_widths",
    "init_params",
    "check_params",
    "as_nodes",
    "encode_nodes",
    "encode",
    "feature_table",
    "coord_bundle",
    "decode_nodes",
    "decode",
    "merge_plans",
    "predict_nodes",
    "pixel_centers",
    "EncodedImage",
    "encode_image",
    "query_rgb",
    "render",
]
