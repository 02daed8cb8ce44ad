"""Knowledge-map attention network and the sequence model built on it."""

from .checkpoint import load_checkpoint, load_model, save_checkpoint
from .config import ModelConfig, VocabProfile
from .han import HanParams, han_forward, node_attention, semantic_attention
from .network import (
    attention_mask,
    bce_loss,
    decoder_forward,
    embed_streams,
    encoder_forward,
    forward,
    fused_encoder_layer,
    predict_head,
)
from .params import ModelParams

__all__ = [
    "HanParams",
    "ModelConfig",
    "ModelParams",
    "VocabProfile",
    "attention_mask",
    "bce_loss",
    "decoder_forward",
    "embed_streams",
    "encoder_forward",
    "forward",
    "fused_encoder_layer",
    "han_forward",
    "load_checkpoint",
    "load_model",
    "node_attention",
    "predict_head",
    "save_checkpoint",
]
