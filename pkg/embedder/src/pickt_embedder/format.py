"""Writer for the binary embedding-table format the training engine reads.

Layout (little-endian): magic ``PICKTEMB`` + version byte 1; u32 n; u32 d;
u8 source flag (0 = external-model, 1 = hash-fallback); u16 model-tag length
+ UTF-8 tag; n*d float32 row-major payload. Row ids go to an adjacent
``<path>.ids`` text file, one id per line, same order.

This module is deliberately self-contained so the exporter runs without the
training engine installed; the byte layout is the shared contract between
the two.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PICKTEMB"
VERSION = 1
FLAG_EXTERNAL = 0


def write_table(ids: list[str], matrix: np.ndarray, model_tag: str, path) -> Path:
    """Atomic write (temp file + rename) of one table and its ids sidecar."""
    path = Path(path)
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"embedding matrix must be 2-d, got shape {matrix.shape}")
    n, d = matrix.shape
    if len(ids) != n:
        raise ValueError(f"{len(ids)} ids for {n} rows")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in embedding table")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("non-finite value in embedding table")
    tag = model_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise ValueError("model_tag longer than 65535 bytes")

    blob = (MAGIC + struct.pack("<B", VERSION)
            + struct.pack("<IIBH", n, d, FLAG_EXTERNAL, len(tag)) + tag
            + matrix.tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)

    ids_path = Path(str(path) + ".ids")
    ids_tmp = ids_path.with_name(ids_path.name + ".tmp")
    ids_tmp.write_text("".join(i + "\n" for i in ids), encoding="utf-8")
    os.replace(ids_tmp, ids_path)
    return path


def read_table_header(path) -> dict:
    """Parse and validate the header of a written file; used for self-checks."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"bad magic {raw[:8]!r}")
    off = len(MAGIC)
    version = raw[off]
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    off += 1
    n, d, flag, tag_len = struct.unpack_from("<IIBH", raw, off)
    off += struct.calcsize("<IIBH")
    tag = raw[off : off + tag_len].decode("utf-8")
    off += tag_len
    if len(raw) - off != n * d * 4:
        raise ValueError(f"payload length mismatch: {len(raw) - off} bytes for {n}x{d}")
    return {"n": n, "d": d, "source_flag": flag, "model_tag": tag}
