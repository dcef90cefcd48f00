"""Binary checkpoint codec.

Layout, all integers little-endian:

    b"UISR"
    u32 format version (1)
    u32 n, n bytes     ModelConfig as canonical JSON (UTF-8)
    u32 array count
    per array:
        u16 n, n bytes name (UTF-8)
        u8  ndim
        u32 x ndim     dims
        f32 x prod     data, C order
"""

import json
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from src.model.config import ConfigError, ModelConfig
from src.model.network import ModelParams, check_params
from src.numerics.adam import NonFiniteError
from src.numerics.autodiff import ShapeError

logger = logging.getLogger(__name__)

MAGIC = b"UISR"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def atomic_write_bytes(path, data: bytes):
    """Write to a temp file in the target directory, then rename over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_checkpoint(params: ModelParams, cfg: ModelConfig) -> bytes:
    blob = cfg.canonical_json().encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(blob)), blob, struct.pack("<I", len(params))]
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"refusing to save non-finite parameter '{name}'")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(params: ModelParams, cfg: ModelConfig, path) -> Path:
    check_params(params, cfg)
    data = encode_checkpoint(params, cfg)
    atomic_write_bytes(path, data)
    logger.debug("saved checkpoint %s (%d arrays, %d bytes)", path, len(params), len(data))
    return Path(path)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"{self.source}: truncated while reading {what} "
                f"(need {n} bytes at offset {self.pos}, file has {len(self.data)})"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Tuple[ModelParams, ModelConfig]:
    head = data[: len(MAGIC)]
    if head != MAGIC[: len(head)]:
        raise BadMagicError(f"{source}: bad magic {head!r}, expected {MAGIC!r}")
    reader = _Reader(data, source)
    reader.take(len(MAGIC), "magic")
    (version,) = reader.unpack("<I", "format version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{source}: format version {version}, this build reads {FORMAT_VERSION}")
    (blob_len,) = reader.unpack("<I", "config length")
    blob = reader.take(blob_len, "config")
    try:
        cfg = ModelConfig.from_dict(json.loads(blob.decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, ConfigError, TypeError) as exc:
        raise CheckpointError(f"{source}: unreadable model config: {exc}") from exc

    (count,) = reader.unpack("<I", "array count")
    params: Dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = reader.unpack("<H", f"array {i} name length")
        name = reader.take(name_len, f"array {i} name").decode("utf-8")
        (ndim,) = reader.unpack("<B", f"'{name}' ndim")
        dims = reader.unpack(f"<{ndim}I", f"'{name}' dims")
        size = int(np.prod(dims, dtype=np.int64))
        raw = reader.take(4 * size, f"'{name}' data")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
    if reader.pos != len(data):
        raise CheckpointError(f"{source}: {len(data) - reader.pos} trailing bytes after last array")
    try:
        check_params(params, cfg)
    except ShapeError as exc:
        raise CheckpointError(f"{source}: {exc}") from exc
    return params, cfg


def load_checkpoint(path) -> Tuple[ModelParams, ModelConfig]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), source=str(path))


__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "CheckpointError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedCheckpointError",
    "atomic_write_bytes",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
