"""Forward pass: embeddings, fused dual-stream encoder, decoder, head, loss.

The two encoder streams (question, concept) each compute their own scaled
attention scores; the score tensors are added before a single shared softmax,
and the shared weights then aggregate each stream's own values.  Causal masks
are applied in the encoder, the decoder, and the decoder's cross-attention, so
position t never sees inputs from positions after t.
"""

import warnings

import numpy as np

from .. import numeric as nc
from ..data.windows import NO_NODE, Batch
from ..errors import ParameterError
from ..numeric import Rng, Tensor
from .config import ModelConfig
from .han import han_forward
from .params import AttentionParams, FeedForwardParams, ModelParams

MASK_BIAS = -1e9
PROB_CLAMP = 1e-7


def attention_mask(valid: np.ndarray) -> Tensor:
    """Additive [B,1,L,L] mask: key s visible from query t iff s <= t and valid."""
    valid = np.asarray(valid)
    if valid.ndim != 2:
        raise ParameterError(f"validity mask must be [B, L], got {valid.shape}")
    b, length = valid.shape
    causal = np.tril(np.ones((length, length)))
    allowed = causal[None, :, :] * (valid > 0).astype(float)[:, None, :]
    bias = ((1.0 - allowed) * MASK_BIAS).astype(nc.default_dtype())
    return Tensor(bias[:, None, :, :])


def _linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    shape = x.data.shape
    out = nc.reshape(x, (-1, shape[-1])) @ w
    if b is not None:
        out = out + b
    return nc.reshape(out, shape[:-1] + (w.data.shape[1],))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, length, d = x.data.shape
    return nc.transpose(nc.reshape(x, (b, length, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, heads, length, hw = x.data.shape
    return nc.reshape(nc.transpose(x, (0, 2, 1, 3)), (b, length, heads * hw))


def _scores_and_values(x: Tensor, attn: AttentionParams, heads: int) -> tuple[Tensor, Tensor]:
    """Pre-softmax scaled scores [B,H,L,L] and value heads for one stream."""
    q = _split_heads(_linear(x, attn.w_q, attn.b_q), heads)
    k = _split_heads(_linear(x, attn.w_k, attn.b_k), heads)
    v = _split_heads(_linear(x, attn.w_v, attn.b_v), heads)
    hw = q.data.shape[-1]
    scores = (q @ nc.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(hw))
    return scores, v


def _attend(weights: Tensor, v: Tensor, attn: AttentionParams) -> Tensor:
    return _linear(_merge_heads(weights @ v), attn.w_o, attn.b_o)


def _ff(x: Tensor, ff: FeedForwardParams) -> Tensor:
    return _linear(nc.gelu(_linear(x, ff.w1, ff.b1)), ff.w2, ff.b2)


def _sublayer(x: Tensor, out: Tensor, ln, p: float, rng, training: bool) -> Tensor:
    return nc.layer_norm(x + nc.dropout(out, p, rng, training), ln.scale, ln.shift)


def fused_encoder_layer(
    x_q: Tensor,
    x_c: Tensor,
    mask: Tensor,
    layer,
    config: ModelConfig,
    rng: Rng,
    training: bool,
    collect: bool = False,
):
    """One encoder layer; both streams share one softmax over added scores."""
    q_scores, q_v = _scores_and_values(x_q, layer.question.attn, config.heads)
    c_scores, c_v = _scores_and_values(x_c, layer.concept.attn, config.heads)
    weights = nc.softmax(q_scores + c_scores + mask, axis=-1)

    p = config.dropout
    x_q = _sublayer(x_q, _attend(weights, q_v, layer.question.attn),
                    layer.question.ln1, p, rng, training)
    x_q = _sublayer(x_q, _ff(x_q, layer.question.ff), layer.question.ln2, p, rng, training)
    x_c = _sublayer(x_c, _attend(weights, c_v, layer.concept.attn),
                    layer.concept.ln1, p, rng, training)
    x_c = _sublayer(x_c, _ff(x_c, layer.concept.ff), layer.concept.ln2, p, rng, training)
    if collect:
        return x_q, x_c, weights.data.copy()
    return x_q, x_c, None


def encoder_forward(
    x_q: Tensor,
    x_c: Tensor,
    mask: Tensor,
    params: ModelParams,
    config: ModelConfig,
    rng: Rng,
    training: bool,
    collect: bool = False,
):
    collected = []
    for layer in params.encoder:
        x_q, x_c, w = fused_encoder_layer(x_q, x_c, mask, layer, config, rng, training, collect)
        if collect:
            collected.append(w)
    return (x_q + x_c) * 0.5, collected


def decoder_forward(
    x_a: Tensor,
    encoder_out: Tensor,
    mask: Tensor,
    params: ModelParams,
    config: ModelConfig,
    rng: Rng,
    training: bool,
    collect: bool = False,
):
    """Causal self-attention over actions, causally masked cross-attention."""
    heads, p = config.heads, config.dropout
    collected = []
    x = x_a
    for i, layer in enumerate(params.decoder):
        s_scores, s_v = _scores_and_values(x, layer.self_attn, heads)
        s_w = nc.softmax(s_scores + mask, axis=-1)
        x = _sublayer(x, _attend(s_w, s_v, layer.self_attn), layer.ln1, p, rng, training)

        c = layer.cross_attn
        q = _split_heads(_linear(x, c.w_q, c.b_q), heads)
        k = _split_heads(_linear(encoder_out, c.w_k, c.b_k), heads)
        v = _split_heads(_linear(encoder_out, c.w_v, c.b_v), heads)
        hw = q.data.shape[-1]
        c_scores = (q @ nc.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(hw))
        c_w = nc.softmax(c_scores + mask, axis=-1)
        x = _sublayer(x, _attend(c_w, v, c), layer.ln2, p, rng, training)

        x = _sublayer(x, _ff(x, layer.ff), layer.ln3, p, rng, training)
        if collect:
            collected.append({"self": s_w.data.copy(), "cross": c_w.data.copy()})
    return x, collected


def _gather_with_missing(rows: Tensor, node_ids: np.ndarray) -> Tensor:
    """Row lookup where NO_NODE (-1) maps to an all-zero row."""
    d = rows.data.shape[1]
    zero = Tensor(np.zeros((1, d), dtype=nc.default_dtype()))
    padded = nc.concat([zero, rows], axis=0)
    return nc.gather_rows(padded, np.asarray(node_ids) + 1)


def question_feature_sum(batch: Batch, params: ModelParams, han_q: Tensor | None) -> Tensor:
    emb = params.embeddings
    x = nc.gather_rows(emb["question_id"], batch.q_id)
    x = x + nc.gather_rows(emb["question_type"], batch.q_type)
    x = x + nc.gather_rows(emb["difficulty"], batch.q_diff)
    x = x + nc.gather_rows(emb["discrimination"], batch.q_disc)
    x = x + nc.gather_rows(emb["activity"], batch.q_act)
    x = x + nc.gather_rows(emb["position"], batch.position)
    if han_q is not None:
        x = x + _gather_with_missing(han_q, batch.q_node)
    return x


def concept_feature_sum(batch: Batch, params: ModelParams, han_c: Tensor | None) -> Tensor:
    emb = params.embeddings
    x = nc.gather_rows(emb["concept_id"], batch.c_id)
    x = x + nc.gather_rows(emb["area"], batch.c_area)
    x = x + nc.gather_rows(emb["content_type"], batch.c_ctype)
    x = x + nc.gather_rows(emb["position"], batch.position)
    if han_c is not None:
        x = x + _gather_with_missing(han_c, batch.c_node)
    return x


def action_feature_sum(batch: Batch, params: ModelParams) -> Tensor:
    emb = params.embeddings
    x = nc.gather_rows(emb["prev_response"], batch.prev_resp)
    x = x + nc.gather_rows(emb["elapsed"], batch.prev_elapsed)
    x = x + nc.gather_rows(emb["lag"], batch.prev_lag)
    x = x + nc.gather_rows(emb["position"], batch.position)
    return x


def embed_streams(
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    han_q: Tensor | None,
    han_c: Tensor | None,
    rng: Rng,
    training: bool,
):
    """Per-stream feature sums, then layer-norm and dropout."""
    p = config.dropout
    x_q = nc.dropout(
        nc.layer_norm(question_feature_sum(batch, params, han_q),
                      params.ln_question.scale, params.ln_question.shift),
        p, rng, training)
    x_c = nc.dropout(
        nc.layer_norm(concept_feature_sum(batch, params, han_c),
                      params.ln_concept.scale, params.ln_concept.shift),
        p, rng, training)
    x_a = nc.dropout(
        nc.layer_norm(action_feature_sum(batch, params),
                      params.ln_action.scale, params.ln_action.shift),
        p, rng, training)
    return x_q, x_c, x_a


def predict_head(z: Tensor, params: ModelParams, config: ModelConfig, rng: Rng, training: bool) -> Tensor:
    """sigmoid(f2(dropout(tanh(f1(dropout(z)))))) per position."""
    p = config.dropout
    h = nc.tanh(_linear(nc.dropout(z, p, rng, training), params.head.f1_w, params.head.f1_b))
    logits = _linear(nc.dropout(h, p, rng, training), params.head.f2_w, params.head.f2_b)
    b, length, _ = logits.data.shape
    return nc.sigmoid(nc.reshape(logits, (b, length)))


def bce_loss(y_hat: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Masked mean binary cross-entropy; an empty mask yields 0 with a warning."""
    labels = np.asarray(labels, dtype=nc.default_dtype())
    mask = np.asarray(mask, dtype=nc.default_dtype())
    total = float(mask.sum())
    if total == 0.0:
        warnings.warn("bce_loss: no valid positions in batch, returning 0", stacklevel=2)
        return Tensor(np.asarray(0.0, dtype=nc.default_dtype()))
    p = nc.clip(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    terms = Tensor(labels) * nc.log(p) + Tensor(1.0 - labels) * nc.log(1.0 - p)
    return nc.tsum(terms * Tensor(mask)) * (-1.0 / total)


def forward(
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    rng: Rng,
    training: bool,
    graph=None,
    metapaths=None,
    collect: bool = False,
):
    """Full network; returns per-position probabilities [B, L] and aux data."""
    aux = {}
    han_q = han_c = None
    if config.han:
        if params.han is None:
            raise ParameterError("config.han is on but params.han is missing")
        if graph is None or metapaths is None:
            raise ParameterError("config.han is on but no graph/metapaths were given")
        han_q, han_c, han_aux = han_forward(graph, metapaths, params.han)
        aux["han"] = {k: v for k, v in han_aux.items()}
    x_q, x_c, x_a = embed_streams(batch, params, config, han_q, han_c, rng, training)
    mask = attention_mask(batch.mask)
    enc_out, enc_w = encoder_forward(x_q, x_c, mask, params, config, rng, training, collect)
    dec_out, dec_w = decoder_forward(x_a, enc_out, mask, params, config, rng, training, collect)
    y_hat = predict_head(dec_out, params, config, rng, training)
    if collect:
        aux["encoder_attention"] = enc_w
        aux["decoder_attention"] = dec_w
    return y_hat, aux
