"""Text-embedding tables: binary file format, hash fallback, PCA reduction.

Embedding file layout (little-endian): magic ``PICKTEMB`` + version byte 1;
u32 n; u32 d; u8 source flag (0 = external-model, 1 = hash-fallback); u16
model-tag length + UTF-8 tag; n*d float32 row-major payload. Row ids live in
an adjacent ``<path>.ids`` text file, one id per line, same order. Reader and
writer both validate magic, version, and payload length.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, ParameterError

MAGIC = b"PICKTEMB"
VERSION = 1

SOURCE_EXTERNAL = "external-model"
SOURCE_HASH = "hash-fallback"
_SOURCE_FLAGS = {SOURCE_EXTERNAL: 0, SOURCE_HASH: 1}
_FLAG_SOURCES = {v: k for k, v in _SOURCE_FLAGS.items()}


@dataclass
class EmbeddingTable:
    ids: list[str]
    matrix: np.ndarray  # n x d float32
    source: str
    model_tag: str

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2:
            raise DimensionError(f"embedding matrix must be 2-d, got shape {self.matrix.shape}")
        if len(self.ids) != self.matrix.shape[0]:
            raise DimensionError(f"{len(self.ids)} ids for {self.matrix.shape[0]} rows")
        if len(set(self.ids)) != len(self.ids):
            raise DataError("duplicate ids in embedding table")
        if not np.all(np.isfinite(self.matrix)):
            raise DataError("non-finite value in embedding table")
        if self.source not in _SOURCE_FLAGS:
            raise ParameterError(f"unknown source {self.source!r}")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def write_table(table: EmbeddingTable, path) -> Path:
    path = Path(path)
    header = MAGIC + struct.pack("<B", VERSION)
    tag = table.model_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise ParameterError("model_tag longer than 65535 bytes")
    header += struct.pack("<IIBH", table.n, table.d, _SOURCE_FLAGS[table.source], len(tag)) + tag
    payload = np.ascontiguousarray(table.matrix, dtype="<f4").tobytes()
    path.write_bytes(header + payload)
    ids_path = Path(str(path) + ".ids")
    ids_path.write_text("".join(i + "\n" for i in table.ids), encoding="utf-8")
    return path


def read_table(path) -> EmbeddingTable:
    path = Path(path)
    if not path.exists():
        raise DataError("missing embedding file", file=str(path))
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 1:
        raise DataError("truncated embedding file header", file=str(path))
    if raw[: len(MAGIC)] != MAGIC:
        raise DataError(f"bad magic {raw[:8]!r}", file=str(path))
    off = len(MAGIC)
    version = raw[off]
    if version != VERSION:
        raise DataError(f"unsupported version {version}", file=str(path))
    off += 1
    try:
        n, d, flag, tag_len = struct.unpack_from("<IIBH", raw, off)
    except struct.error:
        raise DataError("truncated embedding file header", file=str(path)) from None
    off += struct.calcsize("<IIBH")
    if flag not in _FLAG_SOURCES:
        raise DataError(f"unknown source flag {flag}", file=str(path))
    tag = raw[off : off + tag_len].decode("utf-8")
    off += tag_len
    expected = n * d * 4
    if len(raw) - off != expected:
        raise DataError(
            f"payload length mismatch: expected {expected} bytes for {n}x{d}, got {len(raw) - off}",
            file=str(path),
        )
    matrix = np.frombuffer(raw, dtype="<f4", count=n * d, offset=off).reshape(n, d).copy()
    ids_path = Path(str(path) + ".ids")
    if not ids_path.exists():
        raise DataError("missing ids sidecar", file=str(ids_path))
    ids = ids_path.read_text(encoding="utf-8").splitlines()
    if len(ids) != n:
        raise DataError(f"ids sidecar has {len(ids)} lines, expected {n}", file=str(ids_path))
    return EmbeddingTable(ids=ids, matrix=matrix, source=_FLAG_SOURCES[flag], model_tag=tag)


def hash_embed(texts: list[str], ids: list[str], d: int) -> EmbeddingTable:
    """Signed feature-hashing of character trigrams, L2-normalized per row.

    Empty text gives an all-zero row (exempt from normalization).
    """
    if d <= 0:
        raise ParameterError(f"embedding width must be positive, got {d}")
    if len(texts) != len(ids):
        raise DimensionError(f"{len(texts)} texts for {len(ids)} ids")
    matrix = np.zeros((len(texts), d), dtype=np.float64)
    for row, text in enumerate(texts):
        if not text:
            continue
        grams = [text[i : i + 3] for i in range(len(text) - 2)] if len(text) >= 3 else [text]
        for gram in grams:
            h = zlib.crc32(gram.encode("utf-8"))
            sign = 1.0 if (h >> 16) & 1 == 0 else -1.0
            matrix[row, h % d] += sign
        norm = np.linalg.norm(matrix[row])
        if norm > 0:
            matrix[row] /= norm
    return EmbeddingTable(ids=list(ids), matrix=matrix, source=SOURCE_HASH, model_tag=f"trigram-crc32-d{d}")


@dataclass
class PcaModel:
    mean: np.ndarray  # (d,)
    components: np.ndarray  # (d, k), orthonormal columns
    explained_variance_ratio: np.ndarray  # (k,), non-increasing


def pca_fit(table: EmbeddingTable, k: int) -> PcaModel:
    """Top-k principal components of the row covariance.

    Sign convention: each component's largest-magnitude entry is positive,
    so refitting the same data reproduces the same model bit-for-bit.
    """
    n, d = table.matrix.shape
    if k <= 0 or k > min(n, d):
        raise ParameterError(f"k={k} outside [1, min(n={n}, d={d})]")
    x = table.matrix.astype(np.float64)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / n
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    order = np.argsort(eigvals)[::-1][:k]
    comps = eigvecs[:, order]
    vals = np.maximum(eigvals[order], 0.0)
    for j in range(comps.shape[1]):
        i = int(np.argmax(np.abs(comps[:, j])))
        if comps[i, j] < 0:
            comps[:, j] = -comps[:, j]
    total = float(np.maximum(eigvals, 0.0).sum())
    ratios = vals / total if total > 0 else np.zeros(k)
    return PcaModel(mean=mean, components=np.ascontiguousarray(comps), explained_variance_ratio=ratios)


def pca_transform(model: PcaModel, table: EmbeddingTable) -> EmbeddingTable:
    if table.d != model.mean.shape[0]:
        raise DimensionError(f"table width {table.d} != model width {model.mean.shape[0]}")
    z = (table.matrix.astype(np.float64) - model.mean) @ model.components
    return EmbeddingTable(ids=list(table.ids), matrix=z, source=table.source, model_tag=table.model_tag)


def reduce_to_width(tables: list[EmbeddingTable], k: int) -> tuple[PcaModel | None, list[EmbeddingTable]]:
    """Shared-projection reduction of several tables to width k.

    One PCA is fit on the union of all rows (shared feature space across node
    types). Tables already at width k pass through unchanged.
    """
    widths = {t.d for t in tables}
    if len(widths) != 1:
        raise DimensionError(f"tables disagree on width: {sorted(widths)}")
    (d,) = widths
    if d == k:
        return None, tables
    if d < k:
        raise ParameterError(f"cannot widen embeddings from {d} to {k}")
    union = EmbeddingTable(
        ids=[f"{i}#{t_idx}" for t_idx, t in enumerate(tables) for i in t.ids],
        matrix=np.concatenate([t.matrix for t in tables], axis=0),
        source=tables[0].source,
        model_tag=tables[0].model_tag,
    )
    model = pca_fit(union, k)
    return model, [pca_transform(model, t) for t in tables]
