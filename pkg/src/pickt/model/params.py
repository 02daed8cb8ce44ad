"""Named parameter registry: construction, counting, and flat access."""

from dataclasses import dataclass

import numpy as np

from .. import numeric as nc
from ..errors import ParameterError
from ..numeric import Rng, Tensor, init_normal, init_ones, init_zeros
from .config import ModelConfig, VocabProfile
from .han import HanParams

INIT_STD = 0.02

# embedding table name -> (profile field, stream) in lookup order
_EMB_FIELDS = (
    ("question_id", "question_id"),
    ("question_type", "question_type"),
    ("difficulty", "difficulty"),
    ("discrimination", "discrimination"),
    ("activity", "activity"),
    ("concept_id", "concept_id"),
    ("area", "area"),
    ("content_type", "content_type"),
    ("prev_response", "prev_response"),
    ("elapsed", "elapsed"),
    ("lag", "lag"),
)


@dataclass
class LayerNormParams:
    scale: Tensor
    shift: Tensor

    @staticmethod
    def init(d: int) -> "LayerNormParams":
        return LayerNormParams(scale=init_ones((d,)), shift=init_zeros((d,)))

    def named(self, prefix: str) -> dict:
        return {f"{prefix}.scale": self.scale, f"{prefix}.shift": self.shift}


@dataclass
class AttentionParams:
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor

    @staticmethod
    def init(rng: Rng, d: int) -> "AttentionParams":
        return AttentionParams(
            w_q=init_normal((d, d), rng.child(0), INIT_STD), b_q=init_zeros((d,)),
            w_k=init_normal((d, d), rng.child(1), INIT_STD), b_k=init_zeros((d,)),
            w_v=init_normal((d, d), rng.child(2), INIT_STD), b_v=init_zeros((d,)),
            w_o=init_normal((d, d), rng.child(3), INIT_STD), b_o=init_zeros((d,)),
        )

    def named(self, prefix: str) -> dict:
        out = {}
        for name in ("w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o"):
            out[f"{prefix}.{name}"] = getattr(self, name)
        return out


@dataclass
class FeedForwardParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @staticmethod
    def init(rng: Rng, d: int, d_inner: int) -> "FeedForwardParams":
        return FeedForwardParams(
            w1=init_normal((d, d_inner), rng.child(0), INIT_STD), b1=init_zeros((d_inner,)),
            w2=init_normal((d_inner, d), rng.child(1), INIT_STD), b2=init_zeros((d,)),
        )

    def named(self, prefix: str) -> dict:
        return {
            f"{prefix}.w1": self.w1, f"{prefix}.b1": self.b1,
            f"{prefix}.w2": self.w2, f"{prefix}.b2": self.b2,
        }


@dataclass
class StreamBlockParams:
    """One stream's half of a fused encoder layer."""

    attn: AttentionParams
    ln1: LayerNormParams
    ff: FeedForwardParams
    ln2: LayerNormParams

    @staticmethod
    def init(rng: Rng, d: int, d_inner: int) -> "StreamBlockParams":
        return StreamBlockParams(
            attn=AttentionParams.init(rng.child(0), d),
            ln1=LayerNormParams.init(d),
            ff=FeedForwardParams.init(rng.child(1), d, d_inner),
            ln2=LayerNormParams.init(d),
        )

    def named(self, prefix: str) -> dict:
        out = {}
        out.update(self.attn.named(f"{prefix}.attn"))
        out.update(self.ln1.named(f"{prefix}.ln1"))
        out.update(self.ff.named(f"{prefix}.ff"))
        out.update(self.ln2.named(f"{prefix}.ln2"))
        return out


@dataclass
class FusedEncoderLayerParams:
    question: StreamBlockParams
    concept: StreamBlockParams

    @staticmethod
    def init(rng: Rng, d: int, d_inner: int) -> "FusedEncoderLayerParams":
        return FusedEncoderLayerParams(
            question=StreamBlockParams.init(rng.child(0), d, d_inner),
            concept=StreamBlockParams.init(rng.child(1), d, d_inner),
        )

    def named(self, prefix: str) -> dict:
        out = {}
        out.update(self.question.named(f"{prefix}.question"))
        out.update(self.concept.named(f"{prefix}.concept"))
        return out


@dataclass
class DecoderLayerParams:
    self_attn: AttentionParams
    ln1: LayerNormParams
    cross_attn: AttentionParams
    ln2: LayerNormParams
    ff: FeedForwardParams
    ln3: LayerNormParams

    @staticmethod
    def init(rng: Rng, d: int, d_inner: int) -> "DecoderLayerParams":
        return DecoderLayerParams(
            self_attn=AttentionParams.init(rng.child(0), d),
            ln1=LayerNormParams.init(d),
            cross_attn=AttentionParams.init(rng.child(1), d),
            ln2=LayerNormParams.init(d),
            ff=FeedForwardParams.init(rng.child(2), d, d_inner),
            ln3=LayerNormParams.init(d),
        )

    def named(self, prefix: str) -> dict:
        out = {}
        out.update(self.self_attn.named(f"{prefix}.self_attn"))
        out.update(self.ln1.named(f"{prefix}.ln1"))
        out.update(self.cross_attn.named(f"{prefix}.cross_attn"))
        out.update(self.ln2.named(f"{prefix}.ln2"))
        out.update(self.ff.named(f"{prefix}.ff"))
        out.update(self.ln3.named(f"{prefix}.ln3"))
        return out


@dataclass
class HeadParams:
    f1_w: Tensor
    f1_b: Tensor
    f2_w: Tensor
    f2_b: Tensor

    @staticmethod
    def init(rng: Rng, d: int) -> "HeadParams":
        return HeadParams(
            f1_w=init_normal((d, d), rng.child(0), INIT_STD), f1_b=init_zeros((d,)),
            f2_w=init_normal((d, 1), rng.child(1), INIT_STD), f2_b=init_zeros((1,)),
        )

    def named(self, prefix: str = "head") -> dict:
        return {
            f"{prefix}.f1.w": self.f1_w, f"{prefix}.f1.b": self.f1_b,
            f"{prefix}.f2.w": self.f2_w, f"{prefix}.f2.b": self.f2_b,
        }


@dataclass
class ModelParams:
    """Every learnable tensor in one place; `named()` is the flat view."""

    embeddings: dict
    ln_question: LayerNormParams
    ln_concept: LayerNormParams
    ln_action: LayerNormParams
    encoder: list
    decoder: list
    head: HeadParams
    han: HanParams | None

    @staticmethod
    def init(config: ModelConfig, profile: VocabProfile, rng: Rng) -> "ModelParams":
        d = config.d_hidden
        emb = {}
        for i, (name, field) in enumerate(_EMB_FIELDS):
            rows = getattr(profile, field)
            emb[name] = init_normal((rows, d), rng.child(0, i), INIT_STD)
        # one position table shared by the question, concept, and action streams
        emb["position"] = init_normal((config.max_seq_len, d), rng.child(0, len(_EMB_FIELDS)), INIT_STD)
        han = None
        if config.han:
            han = HanParams.init(
                rng.child(5),
                in_dim=config.han_in_dim,
                hidden=config.han_hidden_dim,
                heads=config.han_heads,
                out_dim=d,
            )
        return ModelParams(
            embeddings=emb,
            ln_question=LayerNormParams.init(d),
            ln_concept=LayerNormParams.init(d),
            ln_action=LayerNormParams.init(d),
            encoder=[FusedEncoderLayerParams.init(rng.child(1, i), d, config.d_intermediate)
                     for i in range(config.layers)],
            decoder=[DecoderLayerParams.init(rng.child(2, i), d, config.d_intermediate)
                     for i in range(config.layers)],
            head=HeadParams.init(rng.child(3), d),
            han=han,
        )

    def named(self) -> dict:
        out = {}
        for name in sorted(self.embeddings):
            out[f"emb.{name}"] = self.embeddings[name]
        out.update(self.ln_question.named("stream_ln.question"))
        out.update(self.ln_concept.named("stream_ln.concept"))
        out.update(self.ln_action.named("stream_ln.action"))
        for i, layer in enumerate(self.encoder):
            out.update(layer.named(f"enc.{i}"))
        for i, layer in enumerate(self.decoder):
            out.update(layer.named(f"dec.{i}"))
        out.update(self.head.named("head"))
        if self.han is not None:
            out.update(self.han.named("han"))
        return out

    def tensors(self) -> list:
        return list(self.named().values())

    def param_count(self) -> int:
        return int(sum(t.data.size for t in self.named().values()))

    def load_named(self, arrays: dict) -> None:
        """Overwrite every tensor in place from a {name: ndarray} map."""
        named = self.named()
        missing = sorted(set(named) - set(arrays))
        extra = sorted(set(arrays) - set(named))
        if missing or extra:
            raise ParameterError(
                f"parameter name mismatch: missing={missing[:4]} extra={extra[:4]}"
            )
        for name, tensor in named.items():
            arr = np.asarray(arrays[name])
            if arr.shape != tensor.data.shape:
                raise ParameterError(
                    f"shape mismatch for {name}: checkpoint {arr.shape}, model {tensor.data.shape}"
                )
            tensor.data = arr.astype(nc.default_dtype(), copy=True)
