"""Binary checkpoint format.

Layout (all integers unsigned 32-bit little-endian)::

    b"FITC" | version | config_len | config text (key=value lines, UTF-8)
    | entry_count | entries...

    entry := name_len | name | rank | dims[rank] | float32 LE data

The config block carries every ModelConfig field plus ``iteration`` and ``seed``.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .config import format_config, parse_model_config
from .model import ModelParams

MAGIC = b"FITC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _u32(v: int) -> bytes:
    return struct.pack("<I", v)


def dumps(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_u32(VERSION))
    text = format_config(params.config, extra={"iteration": params.iteration, "seed": params.seed})
    raw = text.encode("utf-8")
    buf.write(_u32(len(raw)))
    buf.write(raw)
    buf.write(_u32(len(params.tensors)))
    for name, arr in params.tensors.items():
        nb = name.encode("utf-8")
        buf.write(_u32(len(nb)))
        buf.write(nb)
        buf.write(_u32(arr.ndim))
        for d in arr.shape:
            buf.write(_u32(d))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def loads(data: bytes) -> ModelParams:
    r = _Reader(data)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    text = r.take(r.u32()).decode("utf-8")
    config, extra = parse_model_config(text)
    tensors = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        dims = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        tensors[name] = arr.astype(np.float64)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after last entry")
    params = ModelParams(config, tensors, int(extra.get("iteration", 0)), int(extra.get("seed", 0)))
    params.validate()
    return params


def save(path, params: ModelParams) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> ModelParams:
    return loads(Path(path).read_bytes())
