"""Export sentence embeddings of question and concept texts.

Reads the ``questions.csv`` / ``concepts.csv`` tables of a dataset directory
layout, runs a pretrained sentence-embedding model over the text columns,
and writes one binary table per node type (``q_text.emb`` / ``c_text.emb``
plus ``.ids`` sidecars) for the training engine to consume.

The model is configuration, never hardcoded: pass any sentence-transformers
identifier via --model. The output dimension is read from the loaded model
and recorded in the file header together with the model identifier and
library version, so a rerun with the same model version reproduces the files
byte for byte. Rows with empty text get a zero vector and are listed in the
skip report rather than being sent to the model.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .format import write_table


class EncoderError(RuntimeError):
    pass


class SentenceEncoder:
    """Lazy wrapper so the heavy model import happens only when used."""

    def __init__(self, model_id: str, batch_size: int, normalize: bool):
        try:
            import sentence_transformers
        except ImportError as exc:
            raise EncoderError(
                "sentence-transformers is not installed; "
                "pip install 'pickt-embedder[model]'"
            ) from exc
        try:
            self._model = sentence_transformers.SentenceTransformer(model_id)
        except Exception as exc:
            raise EncoderError(f"could not load model {model_id!r}: {exc}") from exc
        self.tag = f"{model_id}@sentence-transformers-{sentence_transformers.__version__}"
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self._batch_size = batch_size
        self._normalize = normalize

    def encode(self, texts: list[str]) -> np.ndarray:
        out = self._model.encode(
            texts,
            batch_size=self._batch_size,
            normalize_embeddings=self._normalize,
            convert_to_numpy=True,
            show_progress_bar=False,
        )
        return np.asarray(out, dtype=np.float32)


def read_text_table(path: Path, id_column: str) -> tuple[list[str], list[str]]:
    """Ids and texts in file order; duplicate or missing ids abort."""
    if not path.exists():
        raise EncoderError(f"missing input file {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if id_column not in header or "text" not in header:
            raise EncoderError(
                f"{path} must have {id_column!r} and 'text' columns, header is {header}"
            )
        ids, texts = [], []
        seen = set()
        for row in reader:
            rid = (row[id_column] or "").strip()
            if not rid:
                raise EncoderError(f"{path}: empty {id_column}")
            if rid in seen:
                raise EncoderError(f"{path}: duplicate {id_column} {rid!r}")
            seen.add(rid)
            ids.append(rid)
            texts.append((row["text"] or "").strip())
    return ids, texts


def embed_rows(encoder, ids: list[str], texts: list[str]) -> tuple[np.ndarray, list[str]]:
    """One vector per id, zeros for empty texts; aborts on row-count mismatch."""
    matrix = np.zeros((len(ids), encoder.dim), dtype=np.float32)
    skipped = [rid for rid, text in zip(ids, texts) if not text]
    live = [(row, text) for row, text in enumerate(texts) if text]
    if live:
        vectors = encoder.encode([text for _, text in live])
        if vectors.shape != (len(live), encoder.dim):
            raise EncoderError(
                f"model returned {vectors.shape} for {len(live)} texts of width {encoder.dim}"
            )
        for (row, _), vec in zip(live, vectors):
            matrix[row] = vec
    return matrix, skipped


def run(args, encoder) -> int:
    jobs = [
        ("questions", Path(args.questions), "question_id", "q_text.emb"),
        ("concepts", Path(args.concepts), "concept_id", "c_text.emb"),
    ]
    parsed = [(name, *read_text_table(path, id_column), out_name)
              for name, path, id_column, out_name in jobs]
    # embed everything before writing anything, so a failure on the second
    # table cannot leave a partial output directory behind
    embedded = [(name, ids, *embed_rows(encoder, ids, texts), out_name)
                for name, ids, texts, out_name in parsed]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"model_tag": encoder.tag, "dim": encoder.dim, "tables": {}}
    for name, ids, matrix, skipped, out_name in embedded:
        path = write_table(ids, matrix, encoder.tag, out_dir / out_name)
        report["tables"][name] = {
            "file": path.name,
            "rows": len(ids),
            "skipped_empty_text": skipped,
        }
        note = f", {len(skipped)} empty texts zeroed" if skipped else ""
        print(f"{name}: {len(ids)} rows x {encoder.dim} dims -> {path}{note}")
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedder", description=__doc__.splitlines()[0]
    )
    parser.add_argument("--questions", required=True, help="questions.csv path")
    parser.add_argument("--concepts", required=True, help="concepts.csv path")
    parser.add_argument("--model", required=True,
                        help="sentence-transformers model identifier")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--normalize", action="store_true",
                        help="L2-normalize embeddings (empty-text rows stay zero)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        encoder = SentenceEncoder(args.model, args.batch_size, args.normalize)
        return run(args, encoder)
    except EncoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
