"""Report serialization: canonical JSON, aligned text tables and timing sidecars."""

import json
import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Sequence

import jsonschema

from src.training.checkpoint import atomic_write_bytes

logger = logging.getLogger(__name__)

REPORT_SCHEMA_PATH = Path(__file__).resolve().parent.parent / "schema" / "eval_report.json"


class FingerprintMismatchError(RuntimeError):
    """Two reports come from incompatible runs and cannot be compared."""


def scale_key(scale: float) -> str:
    """Stable label for a scale: 2.0 -> "2", 2.5 -> "2.5"."""
    return format(float(scale), "g")


def jsonable(value: Any) -> Any:
    """Floats that JSON cannot carry become the strings "inf", "-inf", "nan"."""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {k: jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value


def from_jsonable(value: Any) -> Any:
    if isinstance(value, str) and value in ("inf", "-inf", "nan"):
        return float(value)
    if isinstance(value, dict):
        return {k: from_jsonable(v) for k, v in value.items()}
    if isinstance(value, list):
        return [from_jsonable(v) for v in value]
    return value


@lru_cache(maxsize=1)
def load_report_schema() -> Dict[str, Any]:
    with open(REPORT_SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def validate_report_dict(data: Dict[str, Any]):
    jsonschema.validate(instance=data, schema=load_report_schema())


def dumps_report(report) -> str:
    return json.dumps(jsonable(report.to_dict()), sort_keys=True, indent=2) + "\n"


def fmt_value(value: float, digits: int = 3) -> str:
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.{digits}f}"


def render_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    first = "  ".join(h.ljust(w) if i == 0 else h.rjust(w) for i, (h, w) in enumerate(zip(headers, widths)))
    lines = [first, "  ".join("-" * w for w in widths)]
    for row in rows:
        lines.append(
            "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
        )
    return "\n".join(lines) + "\n"


def text_path(path: Path) -> Path:
    return path.with_suffix(".txt")


def timing_path(path: Path) -> Path:
    return path.with_suffix(".timing.json")


def write_report(report, path) -> List[Path]:
    """Write `<path>` (JSON), `<path minus suffix>.txt` and, when the report has timing, a sidecar."""
    path = Path(path)
    data = jsonable(report.to_dict())
    validate_report_dict(data)
    atomic_write_bytes(path, (json.dumps(data, sort_keys=True, indent=2) + "\n").encode("utf-8"))
    written = [path]
    txt = text_path(path)
    if txt != path:
        atomic_write_bytes(txt, report.to_text().encode("utf-8"))
        written.append(txt)
    timing = getattr(report, "timing", None)
    if timing:
        sidecar = timing_path(path)
        atomic_write_bytes(sidecar, (json.dumps(timing, sort_keys=True, indent=2) + "\n").encode("utf-8"))
        written.append(sidecar)
    logger.debug("wrote report files %s", [str(p) for p in written])
    return written


def read_report_dict(path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    validate_report_dict(data)
    return from_jsonable(data)


def compare_reports(base, other) -> Dict[str, float]:
    """Per-scale mean PSNR deltas (other - base) in dB.

    Both reports must share the dataset, the scale set and the training
    recipe; anything else raises FingerprintMismatchError.
    """
    problems = []
    if base.dataset_fingerprint != other.dataset_fingerprint:
        problems.append(
            f"dataset {base.dataset_fingerprint[:12]} vs {other.dataset_fingerprint[:12]}"
        )
    if list(base.scales) != list(other.scales):
        problems.append(f"scales {base.scales} vs {other.scales}")
    if base.recipe != other.recipe:
        problems.append("training recipe differs")
    if problems:
        raise FingerprintMismatchError("cannot compare reports: " + "; ".join(problems))
    deltas = {}
    for key in base.mean:
        a, b = base.mean[key], other.mean[key]
        deltas[key] = 0.0 if a == b else b - a
    return deltas


__all__ = [
    "FingerprintMismatchError",
    "scale_key",
    "jsonable",
    "from_jsonable",
    "validate_report_dict",
    "dumps_report",
    "fmt_value",
    "render_table",
    "write_report",
    "read_report_dict",
    "compare_reports",
]
