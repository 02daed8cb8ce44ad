"""Dataset ingestion, windowing, splitting, and synthesis."""

from .loader import AccessLog, Dataset, LoggedRecords, load_dataset
from .schema import (
    ELAPSED_UNK_BUCKET,
    ELAPSED_VOCAB_SIZE,
    LAG_UNK_BUCKET,
    LAG_VOCAB_SIZE,
    PREV_RESPONSE_VOCAB_SIZE,
    START,
    UNK,
    ConceptMeta,
    InteractionRecord,
    QuestionMeta,
    Vocab,
    Vocabs,
    bucket_to_embedding_index,
    bucketize_times,
    build_vocabs,
)
from .splits import HOLDOUT_82, HOLDOUT_811, KFOLD_5, MODES, SplitPlan, split
from .synth import synth_generate
from .windows import NO_NODE, Batch, FeatureEncoder, SequenceWindow, collate, window_sequences

__all__ = [
    "AccessLog",
    "Batch",
    "ConceptMeta",
    "Dataset",
    "ELAPSED_UNK_BUCKET",
    "ELAPSED_VOCAB_SIZE",
    "FeatureEncoder",
    "HOLDOUT_811",
    "HOLDOUT_82",
    "InteractionRecord",
    "KFOLD_5",
    "LAG_UNK_BUCKET",
    "LAG_VOCAB_SIZE",
    "LoggedRecords",
    "MODES",
    "NO_NODE",
    "PREV_RESPONSE_VOCAB_SIZE",
    "QuestionMeta",
    "START",
    "SequenceWindow",
    "SplitPlan",
    "UNK",
    "Vocab",
    "Vocabs",
    "bucket_to_embedding_index",
    "bucketize_times",
    "build_vocabs",
    "collate",
    "load_dataset",
    "split",
    "synth_generate",
    "window_sequences",
]
