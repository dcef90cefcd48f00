"""TrainConfig and strict JSON config loading."""

import json
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List

import jsonschema
import numpy as np

from src.model.config import ConfigError, ModelConfig

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "schema" / "train_config.json"

PRECISIONS = {"single": np.float32, "double": np.float64}


@lru_cache(maxsize=1)
def load_schema() -> Dict[str, Any]:
    with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def validate_config_dict(data: Any):
    """Raise ConfigError listing every schema violation, path first."""
    validator = jsonschema.Draft7Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = ".".join(str(p) for p in err.absolute_path) or "<root>"
            lines.append(f"{where}: {err.message}")
        raise ConfigError("invalid training config:\n  " + "\n  ".join(lines))


@dataclass
class TrainConfig:
    dataset_dir: str
    epochs: int = 20
    iters_per_epoch: int = 100
    batch_size: int = 4
    lr_patch: int = 48
    queries_per_item: int = 2304
    scale_min: float = 2.0
    scale_max: float = 4.0
    lr: float = 1e-4
    lr_halve_epochs: List[int] = field(default_factory=lambda: [8, 14])
    seed: int = 0
    precision: str = "single"
    eval_scales: List[float] = field(default_factory=lambda: [2.0, 3.0, 4.0])
    prefetch: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        self.dataset_dir = str(self.dataset_dir)
        if self.epochs < 0:
            raise ConfigError(f"TrainConfig.epochs must be >= 0, got {self.epochs}")
        for name in ("iters_per_epoch", "batch_size", "lr_patch", "queries_per_item"):
            if getattr(self, name) < 1:
                raise ConfigError(f"TrainConfig.{name} must be >= 1, got {getattr(self, name)}")
        if self.scale_min < 1:
            raise ConfigError(f"TrainConfig.scale_min must be >= 1, got {self.scale_min}")
        if self.scale_max < self.scale_min:
            raise ConfigError(
                f"TrainConfig.scale_max ({self.scale_max}) must be >= scale_min ({self.scale_min})"
            )
        if self.lr <= 0:
            raise ConfigError(f"TrainConfig.lr must be > 0, got {self.lr}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"TrainConfig.precision must be one of {sorted(PRECISIONS)}, got {self.precision!r}")
        if not self.eval_scales or any(s < 1 for s in self.eval_scales):
            raise ConfigError(f"TrainConfig.eval_scales must be a non-empty list of scales >= 1, got {self.eval_scales}")
        self.lr_halve_epochs = sorted(int(m) for m in self.lr_halve_epochs)
        self.eval_scales = [float(s) for s in self.eval_scales]
        self.scale_min = float(self.scale_min)
        self.scale_max = float(self.scale_max)

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_model(self, **changes) -> "TrainConfig":
        """Copy with model fields replaced, everything else shared."""
        model = ModelConfig.from_dict({**self.model.to_dict(), **changes})
        data = self.to_dict()
        data["model"] = model
        return TrainConfig(**data)

    def recipe_fingerprint(self) -> str:
        """Canonical JSON of the training recipe with the R/C/S toggles and encoding_dim removed."""
        data = self.to_dict()
        for key in ("use_encoding", "use_fusion", "use_residual", "encoding_dim"):
            data["model"].pop(key)
        data.pop("dataset_dir")
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        validate_config_dict(data)
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        return cls(**kwargs)


def load_train_config(path) -> TrainConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return TrainConfig.from_dict(data)


def schema_summary() -> str:
    """One line per config key: name, type and default. Used in CLI help."""
    schema = load_schema()
    lines = []

    def walk(props: Dict[str, Any], prefix: str):
        for key, spec in props.items():
            if spec.get("type") == "object" and "properties" in spec:
                walk(spec["properties"], f"{prefix}{key}.")
                continue
            kind = spec.get("type") or "|".join(json.dumps(v) for v in spec.get("enum", []))
            if kind == "array":
                kind = f"array of {spec['items'].get('type', 'any')}"
            default = json.dumps(spec["default"]) if "default" in spec else "required"
            lines.append(f"  {prefix}{key:<{24 - len(prefix)}} {kind:<22} {default}")

    walk(schema["properties"], "")
    return "config keys (JSON, unknown keys rejected):\n" + "\n".join(lines)


__all__ = [
    "TrainConfig",
    "ConfigError",
    "load_train_config",
    "validate_config_dict",
    "schema_summary",
    "SCHEMA_PATH",
]
