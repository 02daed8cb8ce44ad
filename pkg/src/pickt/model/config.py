"""Model hyperparameters and the vocabulary profile that sizes the tables."""

from dataclasses import dataclass, fields

from ..data.schema import (
    ELAPSED_VOCAB_SIZE,
    LAG_VOCAB_SIZE,
    PREV_RESPONSE_VOCAB_SIZE,
    Vocabs,
)
from ..errors import ParameterError


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; `layers` sets both encoder and decoder depth."""

    layers: int = 4
    heads: int = 8
    d_hidden: int = 512
    d_intermediate: int = 512
    dropout: float = 0.1
    max_seq_len: int = 256
    han: bool = True
    han_in_dim: int = 64
    han_hidden_dim: int = 128
    han_heads: int = 4

    def __post_init__(self):
        for name in ("layers", "heads", "d_hidden", "d_intermediate", "max_seq_len",
                     "han_in_dim", "han_hidden_dim", "han_heads"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_hidden % self.heads != 0:
            raise ParameterError(
                f"d_hidden ({self.d_hidden}) must be divisible by heads ({self.heads})"
            )
        if self.han_hidden_dim % self.han_heads != 0:
            raise ParameterError(
                f"han_hidden_dim ({self.han_hidden_dim}) must be divisible by "
                f"han_heads ({self.han_heads})"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ParameterError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.d_hidden // self.heads


@dataclass(frozen=True)
class VocabProfile:
    """Row counts for every embedding table (reserved ids already included)."""

    question_id: int
    question_type: int
    difficulty: int
    discrimination: int
    activity: int
    concept_id: int
    area: int
    content_type: int
    elapsed: int = ELAPSED_VOCAB_SIZE
    lag: int = LAG_VOCAB_SIZE
    prev_response: int = PREV_RESPONSE_VOCAB_SIZE

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ParameterError(f"vocab size {f.name} must be positive")

    @classmethod
    def from_vocabs(cls, vocabs: Vocabs) -> "VocabProfile":
        sizes = vocabs.sizes()
        return cls(
            question_id=sizes["question"],
            question_type=sizes["qtype"],
            difficulty=sizes["difficulty"],
            discrimination=sizes["discrimination"],
            activity=sizes["activity"],
            concept_id=sizes["concept"],
            area=sizes["area"],
            content_type=sizes["content_type"],
        )
