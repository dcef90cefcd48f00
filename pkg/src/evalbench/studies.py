"""Toggle ablation, encoding-dimension sweep and the Laplacian sharpness study."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.device import resolve_threads
from src.evalbench.evaluate import (
    EvalReport,
    Renderer,
    checkpoint_fingerprint,
    dataset_fingerprint,
    evaluate,
    pre_crop,
    scale_pair,
)
from src.evalbench.reports import FingerprintMismatchError, compare_reports, fmt_value, render_table, scale_key
from src.imaging.image_io import list_pngs, load_png
from src.imaging.metrics import laplacian_stats
from src.model.config import ConfigError, ModelConfig
from src.model.network import decoder_layer_widths, param_count, render
from src.training.checkpoint import load_checkpoint
from src.training.config import TrainConfig
from src.training.trainer import train

logger = logging.getLogger(__name__)

# (use_residual, use_fusion, use_encoding), all-off baseline first
ABLATION_GRID = [
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
    (True, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, True),
]


@dataclass
class StudyRow:
    label: str
    values: Dict[str, float]
    deltas: Dict[str, float]
    param_count: Optional[int] = None
    layer0_width: Optional[int] = None
    extra: Dict[str, Dict[str, float]] = field(default_factory=dict)
    fingerprint: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "label": self.label,
            "values": self.values,
            "deltas": self.deltas,
            "param_count": self.param_count,
            "layer0_width": self.layer0_width,
            "extra": self.extra,
            "fingerprint": self.fingerprint,
        }


@dataclass
class StudyReport:
    kind: str
    scales: List[float]
    unit: str
    rows: List[StudyRow]
    dataset_fingerprint: str
    recipe: Optional[str] = None
    fingerprints: Dict[str, str] = field(default_factory=dict)

    def row(self, label: str) -> StudyRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "scales": list(self.scales),
            "unit": self.unit,
            "rows": [r.to_dict() for r in self.rows],
            "dataset_fingerprint": self.dataset_fingerprint,
            "recipe": self.recipe,
            "fingerprints": dict(self.fingerprints),
        }

    def to_text(self) -> str:
        keys = [scale_key(s) for s in self.scales]
        if self.kind == "laplacian":
            headers = ["statistic"] + [f"x{k}" for k in keys]
            rows = []
            for r in self.rows:
                rows.append([f"{r.label} -S"] + [fmt_value(r.extra["without"][k], 5) for k in keys])
                rows.append([f"{r.label} +S"] + [fmt_value(r.extra["with"][k], 5) for k in keys])
                rows.append([f"{r.label} delta %"] + [fmt_value(r.deltas[k], 2) for k in keys])
        else:
            headers = ["config", "ckpt", "params", "layer0"] + [f"x{k}" for k in keys]
            headers += [f"d x{k} ({self.unit})" for k in keys]
            rows = [
                [r.label, (r.fingerprint or "-")[:12], str(r.param_count), str(r.layer0_width)]
                + [fmt_value(r.values[k], 3) for k in keys]
                + [fmt_value(r.deltas[k], 3) for k in keys]
                for r in self.rows
            ]
        head = f"{self.kind} study\ndataset: {self.dataset_fingerprint}\n"
        for side, fp in sorted(self.fingerprints.items()):
            head += f"checkpoint ({side}): {fp}\n"
        return head + "\n" + render_table(headers, rows)


def _train_and_eval(cfg: TrainConfig, label: str, dataset_dir, work_dir: Path, threads) -> EvalReport:
    ckpt = work_dir / f"{label.replace('+', '_')}.uisr"
    train(cfg, ckpt)
    return evaluate(ckpt, dataset_dir, cfg.eval_scales, threads=threads, recipe=cfg.recipe_fingerprint())


def _model_row(label: str, model: ModelConfig, report: EvalReport, base: EvalReport) -> StudyRow:
    return StudyRow(
        label=label,
        values=dict(report.mean),
        deltas=compare_reports(base, report),
        param_count=param_count(model),
        layer0_width=decoder_layer_widths(model)[0][0],
        fingerprint=report.fingerprint,
    )


def run_ablation(base_cfg: TrainConfig, dataset_dir, work_dir, threads: Optional[int] = None) -> StudyReport:
    """Train and evaluate all 8 R/C/S combinations with one seed and budget."""
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    trained = []
    for r, c, s in ABLATION_GRID:
        cfg = base_cfg.with_model(use_residual=r, use_fusion=c, use_encoding=s)
        cfg.dataset_dir = str(dataset_dir)
        logger.info("ablation: %s", cfg.model.tag)
        trained.append((cfg, _train_and_eval(cfg, cfg.model.tag, dataset_dir, work_dir, threads)))
    base_report = trained[0][1]
    rows = [_model_row(cfg.model.tag, cfg.model, rep, base_report) for cfg, rep in trained]
    return StudyReport(
        kind="ablation",
        scales=base_report.scales,
        unit="dB",
        rows=rows,
        dataset_fingerprint=base_report.dataset_fingerprint,
        recipe=base_report.recipe,
    )


def check_dims(dims: Sequence[int]) -> List[int]:
    out = []
    for d in dims:
        if isinstance(d, bool) or int(d) != d or d < 0 or int(d) % 4:
            raise ConfigError(f"encoding dimension must be a non-negative multiple of 4, got {d!r}")
        out.append(int(d))
    return out


def run_dim_sweep(
    base_cfg: TrainConfig, dims: Sequence[int], dataset_dir, work_dir, threads: Optional[int] = None
) -> StudyReport:
    """R+C models, one per encoding dimension; dim 0 (no encoding) is the baseline row."""
    dims = check_dims(dims)
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    trained = []
    for d in [0] + [d for d in dims if d != 0]:
        if d == 0:
            cfg = base_cfg.with_model(use_residual=True, use_fusion=True, use_encoding=False)
        else:
            cfg = base_cfg.with_model(use_residual=True, use_fusion=True, use_encoding=True, encoding_dim=d)
        cfg.dataset_dir = str(dataset_dir)
        logger.info("dim sweep: encoding_dim %d", d)
        trained.append((d, cfg, _train_and_eval(cfg, f"dim{d}", dataset_dir, work_dir, threads)))
    base_report = trained[0][2]
    rows = [_model_row(f"dim {d}", cfg.model, rep, base_report) for d, cfg, rep in trained]
    return StudyReport(
        kind="dimsweep",
        scales=base_report.scales,
        unit="dB",
        rows=rows,
        dataset_fingerprint=base_report.dataset_fingerprint,
        recipe=base_report.recipe,
    )


def percent_delta(with_s: float, without_s: float) -> float:
    if with_s == without_s:
        return 0.0
    if without_s == 0.0:
        return float("inf") if with_s > 0 else float("-inf")
    return 100.0 * (with_s - without_s) / without_s


@dataclass
class _Side:
    run: Renderer
    model: Optional[ModelConfig] = None
    fingerprint: Optional[str] = None


def _load_side(ckpt, renderer: Optional[Renderer]) -> _Side:
    if renderer is not None and ckpt is None:
        return _Side(renderer)
    params, cfg = load_checkpoint(ckpt)

    def run(lr, out_h, out_w, reference):
        return render(lr, out_h, out_w, params, cfg, threads=1)

    return _Side(renderer or run, cfg, checkpoint_fingerprint(ckpt, cfg.canonical_json()))


def check_encoding_pair(with_s: ModelConfig, without_s: ModelConfig) -> None:
    """Raise unless the two models differ in the spatial encoding alone."""
    a, b = with_s.to_dict(), without_s.to_dict()
    ignored = {"use_encoding"}
    if not (with_s.use_encoding and without_s.use_encoding):
        # encoding settings are inert on a model without the encoding
        ignored |= {"encoding_dim", "freq_init"}
    diff = sorted(k for k in a if k not in ignored and a[k] != b[k])
    if diff:
        detail = ", ".join(f"{k}: {a[k]!r} vs {b[k]!r}" for k in diff)
        raise FingerprintMismatchError(f"Laplacian study checkpoints differ beyond the encoding ({detail})")
    if with_s.use_encoding == without_s.use_encoding:
        logger.warning("Laplacian study: both checkpoints have use_encoding=%s", with_s.use_encoding)


def laplacian_study(
    ckpt_s,
    ckpt_nos,
    dataset_dir,
    scales: Sequence[float],
    renderer_s: Optional[Renderer] = None,
    renderer_nos: Optional[Renderer] = None,
    threads: Optional[int] = None,
) -> StudyReport:
    """Per scale: mean |Laplacian| and mean Laplacian error vs GT, with and without the encoding.

    Deltas are percentages of the +S value over the -S value. When both sides
    come from checkpoints, their model configs must match outside the encoding
    (FingerprintMismatchError otherwise).
    """
    scales = [float(s) for s in scales]
    side_s = _load_side(ckpt_s, renderer_s)
    side_nos = _load_side(ckpt_nos, renderer_nos)
    if side_s.model is not None and side_nos.model is not None:
        check_encoding_pair(side_s.model, side_nos.model)
    run_s, run_nos = side_s.run, side_nos.run
    fingerprints = {
        side: fp for side, fp in (("with", side_s.fingerprint), ("without", side_nos.fingerprint)) if fp is not None
    }
    paths = list_pngs(dataset_dir)
    if not paths:
        raise FileNotFoundError(f"no PNG images in {dataset_dir}")
    keys = [scale_key(s) for s in scales]

    def stats(path: Path):
        hr = pre_crop(load_png(path), scales)
        out = []
        for s in scales:
            lr, ref = scale_pair(hr, s)
            a = laplacian_stats(np.asarray(run_s(lr, ref.shape[0], ref.shape[1], ref), dtype=np.float64), ref)
            b = laplacian_stats(np.asarray(run_nos(lr, ref.shape[0], ref.shape[1], ref), dtype=np.float64), ref)
            out.append((a, b))
        return out

    workers = max(min(resolve_threads(threads), len(paths)), 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_image = list(pool.map(stats, paths))

    rows = []
    for idx, label in enumerate(("mean_abs_laplacian", "laplacian_error")):
        with_s = {k: float(np.mean([img[j][0][idx] for img in per_image])) for j, k in enumerate(keys)}
        without_s = {k: float(np.mean([img[j][1][idx] for img in per_image])) for j, k in enumerate(keys)}
        rows.append(
            StudyRow(
                label=label,
                values=with_s,
                deltas={k: percent_delta(with_s[k], without_s[k]) for k in keys},
                extra={"with": with_s, "without": without_s},
            )
        )
    return StudyReport(
        kind="laplacian",
        scales=scales,
        unit="%",
        rows=rows,
        dataset_fingerprint=dataset_fingerprint(paths),
        fingerprints=fingerprints,
    )


__all__ = [
    "ABLATION_GRID",
    "StudyRow",
    "StudyReport",
    "run_ablation",
    "check_dims",
    "run_dim_sweep",
    "percent_delta",
    "check_encoding_pair",
    "laplacian_study",
]
