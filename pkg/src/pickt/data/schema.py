"""Domain records, vocabularies, and time bucketization.

Vocabulary convention used package-wide: index 0 = UNK, index 1 = the
start/special token, real values from 2. Missing/empty categorical values
map to UNK.
"""

from __future__ import annotations

from dataclasses import dataclass, field

UNK = 0
START = 1

# elapsed time: whole seconds clamped to [0, 300]; lag: whole minutes in [0, 1440].
# One extra bucket index past the clamp range marks a missing value.
ELAPSED_MAX_BUCKET = 300
LAG_MAX_BUCKET = 1440
ELAPSED_UNK_BUCKET = ELAPSED_MAX_BUCKET + 1
LAG_UNK_BUCKET = LAG_MAX_BUCKET + 1

# embedding-table sizes for the bucketized features (buckets shifted by 2,
# UNK bucket folded onto index 0)
ELAPSED_VOCAB_SIZE = ELAPSED_MAX_BUCKET + 1 + 2
LAG_VOCAB_SIZE = LAG_MAX_BUCKET + 1 + 2
PREV_RESPONSE_VOCAB_SIZE = 4  # UNK, start, incorrect, correct


@dataclass(frozen=True)
class InteractionRecord:
    student_id: str
    question_id: str
    timestamp_ms: int
    response: int
    elapsed_ms: int | None
    lag_ms: int | None


@dataclass(frozen=True)
class QuestionMeta:
    question_id: str
    type: str
    difficulty: str
    discrimination: str
    activity: str
    text: str
    linked_concepts: tuple[str, ...]


@dataclass(frozen=True)
class ConceptMeta:
    concept_id: str
    area: str
    content_type: str
    text: str


class Vocab:
    """Dense string-to-index mapping with reserved UNK=0 and start=1."""

    def __init__(self, values=()):
        self.index: dict[str, int] = {}
        for v in values:
            self.add(v)

    def add(self, value: str) -> None:
        if value != "" and value not in self.index:
            self.index[value] = len(self.index) + 2

    def get(self, value: str) -> int:
        if value == "":
            return UNK
        return self.index.get(value, UNK)

    def __contains__(self, value: str) -> bool:
        return value in self.index

    def __len__(self) -> int:
        return len(self.index) + 2

    def values(self):
        return list(self.index)


@dataclass
class Vocabs:
    """All categorical vocabularies, built once from the dataset tables."""

    question: Vocab = field(default_factory=Vocab)
    concept: Vocab = field(default_factory=Vocab)
    qtype: Vocab = field(default_factory=Vocab)
    difficulty: Vocab = field(default_factory=Vocab)
    discrimination: Vocab = field(default_factory=Vocab)
    activity: Vocab = field(default_factory=Vocab)
    area: Vocab = field(default_factory=Vocab)
    content_type: Vocab = field(default_factory=Vocab)

    def sizes(self) -> dict[str, int]:
        return {
            "question": len(self.question),
            "concept": len(self.concept),
            "qtype": len(self.qtype),
            "difficulty": len(self.difficulty),
            "discrimination": len(self.discrimination),
            "activity": len(self.activity),
            "area": len(self.area),
            "content_type": len(self.content_type),
        }


def build_vocabs(questions, concepts) -> Vocabs:
    """Table (file) order drives id assignment, so rebuilding is stable."""
    v = Vocabs()
    for q in questions.values():
        v.question.add(q.question_id)
        v.qtype.add(q.type)
        v.difficulty.add(q.difficulty)
        v.discrimination.add(q.discrimination)
        v.activity.add(q.activity)
    for c in concepts.values():
        v.concept.add(c.concept_id)
        v.area.add(c.area)
        v.content_type.add(c.content_type)
    return v


def bucketize_times(elapsed_ms: int | None, lag_ms: int | None) -> tuple[int, int]:
    """Whole-second / whole-minute buckets with clamping; missing -> UNK bucket."""
    if elapsed_ms is None:
        eb = ELAPSED_UNK_BUCKET
    else:
        eb = min(elapsed_ms // 1000, ELAPSED_MAX_BUCKET)
    if lag_ms is None:
        lb = LAG_UNK_BUCKET
    else:
        lb = min(lag_ms // 60000, LAG_MAX_BUCKET)
    return int(eb), int(lb)


def bucket_to_embedding_index(bucket: int, unk_bucket: int) -> int:
    """Real buckets shift by 2 past the reserved ids; the UNK bucket maps to UNK."""
    if bucket == unk_bucket:
        return UNK
    return bucket + 2
