"""Checkpoint serialization.

Layout: magic "PICKTCKPT", version byte, u32 JSON metadata length + payload,
u32 tensor count, then per tensor a u16 name length + name, u8 rank, u32 per
dimension, and the float32 little-endian row-major payload.  Tensors are
written in sorted-name order and the metadata JSON is key-sorted, so saving
the same state twice produces byte-identical files.
"""

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import DataError
from .config import ModelConfig, VocabProfile
from .params import ModelParams

MAGIC = b"PICKTCKPT"
VERSION = 1


def save_checkpoint(
    path,
    params: ModelParams,
    config: ModelConfig,
    profile: VocabProfile,
    seed: int,
    step: int,
) -> None:
    meta = {
        "config": asdict(config),
        "vocab_profile": asdict(profile),
        "seed": int(seed),
        "step": int(step),
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    named = params.named()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(named)))
        for name in sorted(named):
            data = named[name].data
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DataError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}",
                file=self.path,
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path):
    """Read a checkpoint; returns (config, profile, metadata dict, arrays dict)."""
    path = str(path)
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataError("not a checkpoint file (bad magic)", file=path)
    version = r.u8()
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}", file=path)
    try:
        meta = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt checkpoint metadata: {exc}", file=path) from exc
    for key in ("config", "vocab_profile", "seed", "step"):
        if key not in meta:
            raise DataError(f"checkpoint metadata missing '{key}'", file=path)
    arrays = {}
    count = r.u32()
    for _ in range(count):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        n_items = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = r.take(4 * n_items)
        arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if r.pos != len(r.buf):
        raise DataError(f"{len(r.buf) - r.pos} trailing bytes after tensor directory", file=path)
    config = ModelConfig(**meta["config"])
    profile = VocabProfile(**meta["vocab_profile"])
    return config, profile, meta, arrays


def load_model(path, rng):
    """Rebuild a full model from a checkpoint file."""
    config, profile, meta, arrays = load_checkpoint(path)
    params = ModelParams.init(config, profile, rng)
    params.load_named(arrays)
    return params, config, profile, meta
