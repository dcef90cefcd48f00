import json
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict

from src.implicit.encoding import FREQ_INIT_SCHEMES


class ConfigError(ValueError):
    """A config value or key is invalid."""


@dataclass
class ModelConfig:
    enc_channels: int = 32
    enc_blocks: int = 4
    hidden_width: int = 256
    hidden_layers: int = 4
    encoding_dim: int = 48
    use_encoding: bool = True  # S
    use_fusion: bool = True  # C
    use_residual: bool = True  # R
    freq_init: str = "paper_2e_n"

    def __post_init__(self):
        for name in ("enc_channels", "enc_blocks", "hidden_width", "hidden_layers", "encoding_dim"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"ModelConfig.{name} must be an integer >= 1, got {value!r}")
        if self.encoding_dim % 4:
            raise ConfigError(f"ModelConfig.encoding_dim must be divisible by 4, got {self.encoding_dim}")
        if self.freq_init not in FREQ_INIT_SCHEMES:
            raise ConfigError(f"ModelConfig.freq_init must be one of {FREQ_INIT_SCHEMES}, got {self.freq_init!r}")

    @property
    def feature_dim(self) -> int:
        return 9 * self.enc_channels

    @property
    def coord_width(self) -> int:
        """Width of the fused coordinate bundle: delta plus its encoding."""
        return 2 + (self.encoding_dim if self.use_encoding else 0)

    @property
    def input_width(self) -> int:
        return self.feature_dim + self.coord_width + 2

    @property
    def tag(self) -> str:
        parts = [p for p, on in (("R", self.use_residual), ("C", self.use_fusion), ("S", self.use_encoding)) if on]
        return "+".join(parts) if parts else "base"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown model config key(s): {unknown}")
        return cls(**data)


__all__ = ["ModelConfig", "ConfigError"]
