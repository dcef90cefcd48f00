"""L1 training loop with a step learning-rate schedule."""

import json
import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from src.implicit.queries import plan_queries
from src.model.network import (
    ModelParams,
    as_nodes,
    encode_nodes,
    feature_table,
    init_params,
    merge_plans,
    predict_nodes,
)
from src.numerics import autodiff as ad
from src.numerics.adam import AdamState, NonFiniteError, adam_step
from src.timer import format_duration, timer
from src.training.checkpoint import save_checkpoint
from src.training.config import TrainConfig
from src.training.sampler import Batch, RngStreams, batch_stream, load_dataset

logger = logging.getLogger(__name__)


def lr_at_epoch(lr0: float, halve_epochs: Sequence[int], epoch: int) -> float:
    """lr0 halved once for every boundary m <= epoch (epochs count from 0)."""
    return lr0 * 0.5 ** sum(1 for m in halve_epochs if m <= epoch)


def batch_loss(nodes, batch: Batch, cfg: TrainConfig) -> ad.DiffNode:
    """Mean L1 over every query of every item, as a scalar graph node."""
    dtype = cfg.dtype
    b, p = batch.lr.shape[0], batch.lr.shape[1]
    x = ad.constant(np.transpose(batch.lr, (0, 3, 1, 2)).astype(dtype))
    table = feature_table(encode_nodes(x, nodes, cfg.model))
    plans = [
        plan_queries((p, p), batch.targets[i], (int(batch.hr_sides[i]), int(batch.hr_sides[i])))
        for i in range(b)
    ]
    plan = merge_plans(plans, [i * p * p for i in range(b)])
    pred = predict_nodes(table, plan, nodes, cfg.model)
    target = ad.constant(batch.rgb.reshape(-1, 3).astype(dtype))
    return ad.mean(ad.absolute(ad.subtract(pred, target)))


def train_step(
    params: ModelParams, batch: Batch, opt_state: AdamState, cfg: TrainConfig
) -> Tuple[ModelParams, AdamState, float]:
    """One forward/backward pass and one ADAM update over all parameters."""
    nodes = as_nodes(params, trainable=True)
    loss = batch_loss(nodes, batch, cfg)
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteError(f"non-finite loss {value} (batch scales {np.round(batch.scales, 3).tolist()})")
    grads = ad.backward(loss)
    new_params, new_state = adam_step(params, grads, opt_state)
    return new_params, new_state, value


def default_log_path(ckpt_path) -> Path:
    ckpt_path = Path(ckpt_path)
    return ckpt_path.with_name(ckpt_path.name + ".log.jsonl")


def train(cfg: TrainConfig, out_path, log_path: Optional[Path] = None) -> Path:
    """Train from scratch and write the checkpoint (atomically) plus a JSON-lines log."""
    out_path = Path(out_path)
    log_path = Path(log_path) if log_path else default_log_path(out_path)
    streams = RngStreams(cfg.seed)
    params = init_params(cfg.model, streams["init"], cfg.dtype)
    state = AdamState(lr=cfg.lr)
    dataset = load_dataset(cfg.dataset_dir) if cfg.epochs > 0 else []
    log_path.parent.mkdir(parents=True, exist_ok=True)

    logger.info(
        "training %s: %d epoch(s) x %d iter(s), batch %d, %s precision",
        cfg.model.tag, cfg.epochs, cfg.iters_per_epoch, cfg.batch_size, cfg.precision,
    )
    with open(log_path, "w", encoding="utf-8") as log_file:
        if cfg.epochs > 0:
            batches = batch_stream(dataset, cfg, streams, cfg.epochs * cfg.iters_per_epoch)
            try:
                for epoch in range(cfg.epochs):
                    state.lr = lr_at_epoch(cfg.lr, cfg.lr_halve_epochs, epoch)
                    losses = []
                    with timer(f"epoch {epoch}") as sw:
                        for it in range(cfg.iters_per_epoch):
                            batch = next(batches)
                            try:
                                params, state, loss = train_step(params, batch, state, cfg)
                            except NonFiniteError as exc:
                                raise NonFiniteError(f"epoch {epoch} iteration {it}: {exc}") from exc
                            losses.append(loss)
                    mean_loss = float(np.mean(losses))
                    log_file.write(json.dumps({"epoch": epoch, "mean_loss": mean_loss, "lr": state.lr}) + "\n")
                    log_file.flush()
                    logger.info(
                        "epoch %d/%d mean_loss %.6f lr %.3g (%s)",
                        epoch + 1, cfg.epochs, mean_loss, state.lr, format_duration(sw.elapsed),
                    )
            finally:
                batches.close()
    save_checkpoint(params, cfg.model, out_path)
    return out_path


__all__ = ["lr_at_epoch", "batch_loss", "train_step", "train", "default_log_path"]
