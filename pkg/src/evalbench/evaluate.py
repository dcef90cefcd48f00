"""Multi-scale PSNR evaluation of one checkpoint (or the bicubic baseline)."""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.device import resolve_threads
from src.evalbench.reports import fmt_value, render_table, scale_key
from src.imaging.image_io import list_pngs, load_png
from src.imaging.metrics import psnr
from src.imaging.resample import bicubic_resize, center_crop
from src.model.network import render
from src.timer import timer
from src.training.checkpoint import load_checkpoint

logger = logging.getLogger(__name__)

BICUBIC = "bicubic"

# renderer(lr, out_h, out_w, reference) -> SR image. `reference` is the HR
# crop being scored; model renderers ignore it, oracle renderers return it.
Renderer = Callable[[np.ndarray, int, int, np.ndarray], np.ndarray]


@dataclass
class EvalReport:
    method: str
    scales: List[float]
    images: List[str]
    per_image: Dict[str, List[float]]
    mean: Dict[str, float]
    fingerprint: str
    dataset_fingerprint: str
    recipe: Optional[str] = None
    timing: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        # timing stays out so identical runs give identical report bytes
        return {
            "kind": "eval",
            "method": self.method,
            "scales": list(self.scales),
            "images": list(self.images),
            "per_image": self.per_image,
            "mean": self.mean,
            "fingerprint": self.fingerprint,
            "dataset_fingerprint": self.dataset_fingerprint,
            "recipe": self.recipe,
        }

    def to_text(self) -> str:
        keys = [scale_key(s) for s in self.scales]
        headers = ["image"] + [f"x{k}" for k in keys]
        rows = [
            [name] + [fmt_value(self.per_image[k][i], 2) for k in keys]
            for i, name in enumerate(self.images)
        ]
        rows.append(["mean"] + [fmt_value(self.mean[k], 3) for k in keys])
        head = f"method: {self.method}\nfingerprint: {self.fingerprint}\ndataset: {self.dataset_fingerprint}\n\n"
        return head + render_table(headers, rows)


def sha256_hex(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for chunk in chunks:
        h.update(chunk)
    return h.hexdigest()


def dataset_fingerprint(paths: Sequence[Path]) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(p.name.encode("utf-8"))
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


def checkpoint_fingerprint(ckpt_path: Path, config_json: str) -> str:
    return sha256_hex(config_json.encode("utf-8"), Path(ckpt_path).read_bytes())


def pre_crop(hr: np.ndarray, scales: Sequence[float]) -> np.ndarray:
    """Center-crop to a multiple of lcm(int parts of scales) when that fits."""
    step = reduce(math.lcm, [max(int(s), 1) for s in scales], 1)
    h, w = hr.shape[:2]
    if step > min(h, w):
        return hr
    return center_crop(hr, h // step * step, w // step * step)


def scale_pair(hr: np.ndarray, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """(LR, HR reference) for one scale.

    LR side is floor(side / scale); the reference is the centered HR crop of
    side round(lr_side * scale), and LR is its bicubic downscale.
    """
    h, w = hr.shape[:2]
    lr_h, lr_w = int(math.floor(h / scale + 1e-9)), int(math.floor(w / scale + 1e-9))
    if lr_h < 1 or lr_w < 1:
        raise ValueError(f"scale x{scale} is too large for a {h}x{w} image")
    ref = center_crop(hr, int(round(lr_h * scale)), int(round(lr_w * scale)))
    return bicubic_resize(ref, lr_h, lr_w), ref


def _bicubic_renderer(lr, out_h, out_w, reference):
    return bicubic_resize(lr, out_h, out_w)


def check_inputs(ckpt, dataset_dir, baseline: Optional[str]):
    missing = []
    if baseline is None and (ckpt is None or not Path(ckpt).is_file()):
        missing.append(f"checkpoint {ckpt}")
    if not Path(dataset_dir).is_dir():
        missing.append(f"dataset directory {dataset_dir}")
    elif not list_pngs(dataset_dir):
        missing.append(f"PNG images in {dataset_dir}")
    if missing:
        raise FileNotFoundError("missing: " + ", ".join(missing))


def evaluate(
    ckpt,
    dataset_dir,
    scales: Sequence[float],
    baseline: Optional[str] = None,
    renderer: Optional[Renderer] = None,
    threads: Optional[int] = None,
    recipe: Optional[str] = None,
) -> EvalReport:
    """PSNR of every image at every scale, one model for all scales.

    baseline="bicubic" skips the model and upsamples LR bicubically.
    """
    if baseline not in (None, BICUBIC):
        raise ValueError(f"unknown baseline {baseline!r}, expected {BICUBIC!r}")
    scales = [float(s) for s in scales]
    if not scales or any(s < 1 for s in scales):
        raise ValueError(f"scales must be a non-empty list of values >= 1, got {scales}")
    check_inputs(ckpt, dataset_dir, baseline)
    paths = list_pngs(dataset_dir)

    if baseline == BICUBIC:
        method, fingerprint = BICUBIC, sha256_hex(BICUBIC.encode("utf-8"))
        default_renderer = _bicubic_renderer
    else:
        params, cfg = load_checkpoint(ckpt)
        method = cfg.tag
        fingerprint = checkpoint_fingerprint(ckpt, cfg.canonical_json())

        def default_renderer(lr, out_h, out_w, reference):
            # parallelism is across images, so each render stays single-threaded
            return render(lr, out_h, out_w, params, cfg, threads=1)

    run = renderer or default_renderer
    keys = [scale_key(s) for s in scales]

    def score(path: Path):
        hr = pre_crop(load_png(path), scales)
        values, seconds = [], []
        for s in scales:
            lr, ref = scale_pair(hr, s)
            with timer(f"{path.name} x{scale_key(s)}") as sw:
                sr = run(lr, ref.shape[0], ref.shape[1], ref)
            values.append(psnr(np.asarray(sr, dtype=np.float64), ref))
            seconds.append(sw.elapsed)
        return values, seconds

    workers = min(resolve_threads(threads), len(paths))
    with ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        results = list(pool.map(score, paths))

    per_image = {k: [r[0][j] for r in results] for j, k in enumerate(keys)}
    mean = {k: float(np.mean(v)) for k, v in per_image.items()}
    render_seconds = [t for r in results for t in r[1]]
    timing = {
        "renders": float(len(render_seconds)),
        "total_render_s": float(np.sum(render_seconds)),
        "mean_render_s": float(np.mean(render_seconds)),
        "max_render_s": float(np.max(render_seconds)),
    }
    logger.info(
        "%s on %d image(s): %s",
        method, len(paths), ", ".join(f"x{k} {fmt_value(mean[k])} dB" for k in keys),
    )
    return EvalReport(
        method=method,
        scales=scales,
        images=[p.name for p in paths],
        per_image=per_image,
        mean=mean,
        fingerprint=fingerprint,
        dataset_fingerprint=dataset_fingerprint(paths),
        recipe=recipe,
        timing=timing,
    )


__all__ = [
    "BICUBIC",
    "Renderer",
    "EvalReport",
    "dataset_fingerprint",
    "checkpoint_fingerprint",
    "pre_crop",
    "scale_pair",
    "evaluate",
]
