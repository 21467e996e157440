"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic     8 bytes  b"HEALCKPT"
    version   uint32   FORMAT_VERSION
    meta_len  uint32   length of the UTF-8 JSON metadata block
    meta      bytes    {"config": {...}, "feature_dim": int, "num_classes": int}
    count     uint32   number of tensors
    per tensor:
        name_len uint16, name (UTF-8), rows uint32, cols uint32,
        rows*cols float64 values, row-major
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from heal.config import TrainConfig
from heal.errors import FormatError
from heal.model import HEALModel

MAGIC = b"HEALCKPT"
FORMAT_VERSION = 1


def save_checkpoint(model: HEALModel, path) -> None:
    meta = json.dumps(
        {"config": model.config.to_dict(), "feature_dim": model.feature_dim, "num_classes": model.num_classes},
        sort_keys=True,
    ).encode()
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta)), meta, struct.pack("<I", len(model.params))]
    for name, value in model.params.items():
        raw = name.encode()
        rows, cols = value.shape
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<II", rows, cols))
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> HEALModel:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(len(MAGIC)) != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic header)")
    version, meta_len = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = json.loads(reader.take(meta_len).decode())
        config = TrainConfig(**meta["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: unreadable metadata ({exc})") from None
    (count,) = reader.unpack("<I")
    params = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode()
        rows, cols = reader.unpack("<II")
        values = np.frombuffer(reader.take(8 * rows * cols), dtype="<f8")
        params[name] = values.reshape(rows, cols).astype(np.float64)
    if reader.pos != len(reader.data):
        raise FormatError(f"{path}: trailing bytes after last tensor")
    return HEALModel(config, meta["feature_dim"], meta["num_classes"], params)
