"""Sequence windowing and feature encoding.

Each student's time-sorted records split into contiguous non-overlapping
windows of at most max_seq_len positions; the final partial window is kept
and padded. Encoder features at position t describe the question asked at t;
decoder features at t describe the action at t-1, with position 0 carrying
the start token for all three action features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schema import (
    ELAPSED_UNK_BUCKET,
    LAG_UNK_BUCKET,
    START,
    UNK,
    Vocabs,
    bucket_to_embedding_index,
    bucketize_times,
)

NO_NODE = -1  # "no graph row" marker for q_node/c_node


@dataclass
class SequenceWindow:
    """One padded window; all arrays have length max_seq_len.

    ``records`` keeps the source rows (one per valid position) so evaluation
    can group predictions by raw question id without re-deriving the
    grouping/chunking order.
    """

    student_id: str
    length: int
    q_id: np.ndarray
    q_type: np.ndarray
    q_diff: np.ndarray
    q_disc: np.ndarray
    q_act: np.ndarray
    q_node: np.ndarray
    c_id: np.ndarray
    c_area: np.ndarray
    c_ctype: np.ndarray
    c_node: np.ndarray
    position: np.ndarray
    prev_resp: np.ndarray
    prev_elapsed: np.ndarray
    prev_lag: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    records: list | None = None


class FeatureEncoder:
    """Maps raw records to window feature ids.

    ``question_nodes`` / ``concept_nodes`` index rows of the knowledge-map
    embedding matrices; they may cover ids outside the training vocabularies
    (that is how unseen questions keep item-specific graph features while
    their categorical id falls back to UNK).
    """

    def __init__(
        self,
        questions: dict,
        concepts: dict,
        vocabs: Vocabs,
        question_nodes: dict[str, int] | None = None,
        concept_nodes: dict[str, int] | None = None,
    ):
        self.questions = questions
        self.concepts = concepts
        self.vocabs = vocabs
        self.question_nodes = question_nodes or {}
        self.concept_nodes = concept_nodes or {}

    def primary_concept(self, question_id: str) -> str:
        q = self.questions.get(question_id)
        if q is None or not q.linked_concepts:
            return ""
        return q.linked_concepts[0]  # first-listed concept carries the stream

    def encode_window(self, records: list, max_seq_len: int) -> SequenceWindow:
        L = len(records)
        if L == 0 or L > max_seq_len:
            raise ValueError(f"window length {L} outside [1, {max_seq_len}]")
        ints = lambda: np.zeros(max_seq_len, dtype=np.int64)
        w = SequenceWindow(
            student_id=records[0].student_id,
            length=L,
            q_id=ints(),
            q_type=ints(),
            q_diff=ints(),
            q_disc=ints(),
            q_act=ints(),
            q_node=np.full(max_seq_len, NO_NODE, dtype=np.int64),
            c_id=ints(),
            c_area=ints(),
            c_ctype=ints(),
            c_node=np.full(max_seq_len, NO_NODE, dtype=np.int64),
            position=ints(),
            prev_resp=ints(),
            prev_elapsed=ints(),
            prev_lag=ints(),
            labels=np.zeros(max_seq_len, dtype=np.float32),
            mask=np.zeros(max_seq_len, dtype=np.float32),
            records=list(records),
        )
        v = self.vocabs
        for t, rec in enumerate(records):
            q = self.questions.get(rec.question_id)
            cid = self.primary_concept(rec.question_id)
            c = self.concepts.get(cid)
            w.q_id[t] = v.question.get(rec.question_id)
            w.q_type[t] = v.qtype.get(q.type) if q else UNK
            w.q_diff[t] = v.difficulty.get(q.difficulty) if q else UNK
            w.q_disc[t] = v.discrimination.get(q.discrimination) if q else UNK
            w.q_act[t] = v.activity.get(q.activity) if q else UNK
            w.q_node[t] = self.question_nodes.get(rec.question_id, NO_NODE)
            w.c_id[t] = v.concept.get(cid)
            w.c_area[t] = v.area.get(c.area) if c else UNK
            w.c_ctype[t] = v.content_type.get(c.content_type) if c else UNK
            w.c_node[t] = self.concept_nodes.get(cid, NO_NODE)
            w.position[t] = t
            if t == 0:
                w.prev_resp[t] = START
                w.prev_elapsed[t] = START
                w.prev_lag[t] = START
            else:
                prev = records[t - 1]
                w.prev_resp[t] = 2 + prev.response
                eb, lb = bucketize_times(prev.elapsed_ms, prev.lag_ms)
                w.prev_elapsed[t] = bucket_to_embedding_index(eb, ELAPSED_UNK_BUCKET)
                w.prev_lag[t] = bucket_to_embedding_index(lb, LAG_UNK_BUCKET)
            w.labels[t] = float(rec.response)
            w.mask[t] = 1.0
        return w


def window_sequences(records, max_seq_len: int, encoder: FeatureEncoder) -> list[SequenceWindow]:
    """Group by student, time-sort (stable), chunk, and encode."""
    groups: dict[str, list] = {}
    for rec in records:
        groups.setdefault(rec.student_id, []).append(rec)
    windows = []
    for sid, recs in groups.items():
        recs = sorted(recs, key=lambda r: r.timestamp_ms)
        for start in range(0, len(recs), max_seq_len):
            windows.append(encoder.encode_window(recs[start : start + max_seq_len], max_seq_len))
    return windows


@dataclass
class Batch:
    """Stacked windows: every field is [B, L] (int64 or float32)."""

    student_ids: list
    q_id: np.ndarray
    q_type: np.ndarray
    q_diff: np.ndarray
    q_disc: np.ndarray
    q_act: np.ndarray
    q_node: np.ndarray
    c_id: np.ndarray
    c_area: np.ndarray
    c_ctype: np.ndarray
    c_node: np.ndarray
    position: np.ndarray
    prev_resp: np.ndarray
    prev_elapsed: np.ndarray
    prev_lag: np.ndarray
    labels: np.ndarray
    mask: np.ndarray

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def seq_len(self) -> int:
        return self.labels.shape[1]


_FIELDS = [
    "q_id", "q_type", "q_diff", "q_disc", "q_act", "q_node",
    "c_id", "c_area", "c_ctype", "c_node", "position",
    "prev_resp", "prev_elapsed", "prev_lag", "labels", "mask",
]


def collate(windows: list[SequenceWindow]) -> Batch:
    if not windows:
        raise ValueError("cannot collate an empty window list")
    kwargs = {name: np.stack([getattr(w, name) for w in windows]) for name in _FIELDS}
    return Batch(student_ids=[w.student_id for w in windows], **kwargs)
