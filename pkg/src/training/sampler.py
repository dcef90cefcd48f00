"""Training data: per-purpose RNG streams, dataset loading and batch sampling."""

import logging
import queue
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List

import numpy as np

from src.imaging.image_io import list_pngs, load_png
from src.imaging.pairs import hr_side, make_lr_hr_pair
from src.implicit.encoding import coord_grid
from src.training.config import TrainConfig

logger = logging.getLogger(__name__)

# Fixed sub-seed per consumer; new consumers get new ids, existing ids never move.
STREAM_IDS: Dict[str, int] = {"init": 0, "image": 1, "scale": 2, "crop": 3, "query": 4}


class RngStreams:
    def __init__(self, seed: int):
        self.seed = seed
        self._gens = {
            name: np.random.default_rng(np.random.SeedSequence([seed, sid]))
            for name, sid in STREAM_IDS.items()
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._gens[name]


@dataclass
class Batch:
    lr: np.ndarray  # (B, p, p, 3)
    targets: np.ndarray  # (B, Q, 2) HR pixel centers in [-1, 1]
    rgb: np.ndarray  # (B, Q, 3) ground truth
    scales: np.ndarray  # (B,)
    hr_sides: np.ndarray  # (B,)

    def __len__(self):
        return self.lr.shape[0]


def load_dataset(dataset_dir) -> List[np.ndarray]:
    directory = Path(dataset_dir)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    paths = list_pngs(directory)
    if not paths:
        raise FileNotFoundError(f"no PNG images in {directory}")
    images = [load_png(p) for p in paths]
    logger.info("loaded %d images from %s", len(images), directory)
    return images


def _sample_item(dataset: List[np.ndarray], cfg: TrainConfig, streams: RngStreams):
    scale = float(streams["scale"].uniform(cfg.scale_min, cfg.scale_max))
    side = hr_side(scale, cfg.lr_patch)
    eligible = [i for i, img in enumerate(dataset) if min(img.shape[:2]) >= side]
    if not eligible:
        raise ValueError(
            f"no image is large enough for a {side}x{side} HR patch "
            f"(scale {scale:.3f}, lr_patch {cfg.lr_patch}); largest is "
            f"{max(min(img.shape[:2]) for img in dataset)} px"
        )
    img = dataset[eligible[int(streams["image"].integers(len(eligible)))]]
    lr, hr = make_lr_hr_pair(img, scale, cfg.lr_patch, streams["crop"])

    n_pixels = side * side
    q = cfg.queries_per_item
    if n_pixels >= q:
        flat = streams["query"].choice(n_pixels, size=q, replace=False)
    else:
        flat = streams["query"].integers(0, n_pixels, size=q)
    rows, cols = np.divmod(flat, side)
    centers = coord_grid(side)
    targets = np.stack([centers[rows], centers[cols]], axis=1)
    return lr, targets, hr[rows, cols], scale, side


def sample_batch(dataset: List[np.ndarray], cfg: TrainConfig, streams: RngStreams) -> Batch:
    """batch_size items, each with its own scale, crop and query set."""
    if not dataset:
        raise ValueError("sample_batch: dataset is empty")
    items = [_sample_item(dataset, cfg, streams) for _ in range(cfg.batch_size)]
    return Batch(
        lr=np.stack([it[0] for it in items]),
        targets=np.stack([it[1] for it in items]),
        rgb=np.stack([it[2] for it in items]),
        scales=np.array([it[3] for it in items]),
        hr_sides=np.array([it[4] for it in items]),
    )


_DONE = object()


def batch_stream(
    dataset: List[np.ndarray], cfg: TrainConfig, streams: RngStreams, n_batches: int
) -> Iterator[Batch]:
    """Yield n_batches batches; with cfg.prefetch a producer thread stays up to two ahead.

    All randomness is drawn by the single producer in order, so the sequence
    is the same with or without prefetching.
    """
    if not cfg.prefetch:
        for _ in range(n_batches):
            yield sample_batch(dataset, cfg, streams)
        return

    q: "queue.Queue" = queue.Queue(maxsize=2)
    stop = threading.Event()

    def put(item) -> bool:
        while not stop.is_set():
            try:
                q.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def produce():
        try:
            for _ in range(n_batches):
                if not put(sample_batch(dataset, cfg, streams)):
                    return
            put(_DONE)
        except BaseException as exc:  # re-raised on the consumer side
            put(exc)

    worker = threading.Thread(target=produce, name="batch-producer", daemon=True)
    worker.start()
    try:
        while True:
            item = q.get()
            if item is _DONE:
                return
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()
        worker.join(timeout=5)


__all__ = ["STREAM_IDS", "RngStreams", "Batch", "load_dataset", "sample_batch", "batch_stream"]
