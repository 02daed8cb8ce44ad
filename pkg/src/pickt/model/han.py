"""Heterogeneous graph attention over the knowledge map.

Pipeline per forward pass (recomputed every training step so gradients reach
every parameter): type-specific input projection -> per-meta-path multi-head
node attention with a self skip -> head concat -> semantic attention across
meta-paths -> type-specific output projection to the model width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import numeric as nc
from ..errors import ParameterError
from ..graph import CC, CQC, QC, QCQ, ALL_PATHS, HeteroGraph, MetaPathAdjacency
from ..numeric import Rng, Tensor

MASK_BIAS = -1e9


@dataclass
class HanParams:
    w_concept: Tensor  # (in, hidden)
    w_question: Tensor  # (in, hidden)
    attn_tgt: dict  # tag -> (heads, head_width)
    attn_src: dict  # tag -> (heads, head_width)
    sem_w: Tensor  # (hidden, hidden)
    sem_b: Tensor  # (hidden,)
    sem_q: Tensor  # (hidden,)
    out_concept: Tensor  # (hidden, out)
    out_question: Tensor  # (hidden, out)
    heads: int

    @staticmethod
    def init(rng: Rng, in_dim: int = 64, hidden: int = 128, heads: int = 4, out_dim: int = 512) -> "HanParams":
        if hidden % heads != 0:
            raise ParameterError(f"hidden width {hidden} not divisible by {heads} heads")
        hw = hidden // heads
        # fan-scaled init (unlike the 0.02 used for embedding tables): the
        # graph signal crosses two projections in series, and at 0.02 each
        # the product starts ~4 orders below the id-embedding pathway, which
        # stalls its training for hundreds of epochs
        def glorot(shape, r):
            std = math.sqrt(2.0 / (shape[0] + shape[-1]))
            return nc.init_normal(shape, r, std=std)

        return HanParams(
            w_concept=glorot((in_dim, hidden), rng.child(0)),
            w_question=glorot((in_dim, hidden), rng.child(1)),
            attn_tgt={tag: glorot((heads, hw), rng.child(10 + i)) for i, tag in enumerate(ALL_PATHS)},
            attn_src={tag: glorot((heads, hw), rng.child(20 + i)) for i, tag in enumerate(ALL_PATHS)},
            sem_w=glorot((hidden, hidden), rng.child(30)),
            sem_b=nc.init_zeros((hidden,)),
            sem_q=glorot((hidden,), rng.child(31)),
            out_concept=glorot((hidden, out_dim), rng.child(32)),
            out_question=glorot((hidden, out_dim), rng.child(33)),
            heads=heads,
        )

    def named(self, prefix: str = "han") -> dict:
        out = {
            f"{prefix}.w_concept": self.w_concept,
            f"{prefix}.w_question": self.w_question,
            f"{prefix}.sem_w": self.sem_w,
            f"{prefix}.sem_b": self.sem_b,
            f"{prefix}.sem_q": self.sem_q,
            f"{prefix}.out_concept": self.out_concept,
            f"{prefix}.out_question": self.out_question,
        }
        for tag in ALL_PATHS:
            out[f"{prefix}.attn_tgt.{tag}"] = self.attn_tgt[tag]
            out[f"{prefix}.attn_src.{tag}"] = self.attn_src[tag]
        return out


def _to_heads(x: Tensor, heads: int) -> Tensor:
    # (n, hidden) -> (heads, n, head_width)
    n, hidden = x.shape
    return nc.transpose(nc.reshape(x, (n, heads, hidden // heads)), (1, 0, 2))


def node_attention(
    target_h: Tensor,
    source_h: Tensor,
    adjacency: MetaPathAdjacency,
    a_tgt: Tensor,
    a_src: Tensor,
) -> tuple[Tensor, Tensor]:
    """Multi-head masked attention over one meta-path, with a skip connection.

    e_ij = LeakyReLU(0.2)(a_tgt . h_i + a_src . h_j) for neighbors j of i;
    alpha = softmax over each target's neighbor set; out_i = GELU(sum alpha h_j)
    + h_i, heads concatenated. The skip keeps each node's own projected
    features from washing out under the neighbor softmax (weight ~ 1/degree),
    which is what lets an id-less question still carry item-specific signal
    downstream. Returns (out (n_t, hidden), alpha (heads, n_t, n_s)).
    """
    heads, hw = a_tgt.shape
    th = _to_heads(target_h, heads)  # (H, n_t, hw)
    sh = _to_heads(source_h, heads)  # (H, n_s, hw)
    s_t = nc.matmul(th, nc.reshape(a_tgt, (heads, hw, 1)))  # (H, n_t, 1)
    s_s = nc.matmul(sh, nc.reshape(a_src, (heads, hw, 1)))  # (H, n_s, 1)
    e = nc.leaky_relu(nc.add(s_t, nc.transpose(s_s, (0, 2, 1))), slope=0.2)  # (H, n_t, n_s)
    bias = (1.0 - adjacency.mask) * MASK_BIAS  # 0 on edges, -1e9 elsewhere
    alpha = nc.softmax(nc.add(e, bias[None, :, :]), axis=-1)
    agg = nc.gelu(nc.matmul(alpha, sh))  # (H, n_t, hw)
    n_t = target_h.shape[0]
    out = nc.reshape(nc.transpose(agg, (1, 0, 2)), (n_t, heads * hw))
    return nc.add(out, target_h), alpha


def semantic_attention(z_by_path: dict, sem_w: Tensor, sem_b: Tensor, sem_q: Tensor) -> tuple[Tensor, Tensor]:
    """Fuse per-meta-path embeddings: w = mean_i q . tanh(W z_i + b); beta = softmax(w).

    Returns (Z (n, hidden), beta (n_paths,)); beta order follows dict order.
    """
    hidden = sem_q.shape[0]
    scores = []
    for z in z_by_path.values():
        t = nc.tanh(nc.add(nc.matmul(z, sem_w), sem_b))  # (n, hidden)
        s = nc.matmul(t, nc.reshape(sem_q, (hidden, 1)))  # (n, 1)
        scores.append(nc.tmean(s))
    beta = nc.softmax(nc.stack(scores, axis=0), axis=0)  # (n_paths,)
    stacked = nc.stack(list(z_by_path.values()), axis=0)  # (P, n, hidden)
    weighted = nc.mul(stacked, nc.reshape(beta, (len(scores), 1, 1)))
    return nc.tsum(weighted, axis=0), beta


def han_forward(
    graph: HeteroGraph,
    metapaths: dict,
    params: HanParams,
    collect: bool = False,
) -> tuple[Tensor, Tensor, dict]:
    """Full pipeline -> (question embeddings (n_q, out), concept embeddings (n_c, out), aux)."""
    h_c = nc.matmul(Tensor(graph.concept_features), params.w_concept)
    h_q = nc.matmul(Tensor(graph.question_features), params.w_question)

    z_cc, a_cc = node_attention(h_c, h_c, metapaths[CC], params.attn_tgt[CC], params.attn_src[CC])
    z_cqc, a_cqc = node_attention(h_c, h_c, metapaths[CQC], params.attn_tgt[CQC], params.attn_src[CQC])
    # QC sources: [question block ; concept block], matching the adjacency layout
    qc_sources = nc.concat([h_q, h_c], axis=0)
    z_qc, a_qc = node_attention(h_q, qc_sources, metapaths[QC], params.attn_tgt[QC], params.attn_src[QC])
    z_qcq, a_qcq = node_attention(h_q, h_q, metapaths[QCQ], params.attn_tgt[QCQ], params.attn_src[QCQ])

    z_concept, beta_c = semantic_attention({CC: z_cc, CQC: z_cqc}, params.sem_w, params.sem_b, params.sem_q)
    z_question, beta_q = semantic_attention({QC: z_qc, QCQ: z_qcq}, params.sem_w, params.sem_b, params.sem_q)

    out_c = nc.matmul(z_concept, params.out_concept)
    out_q = nc.matmul(z_question, params.out_question)
    aux = {"beta_concept": beta_c, "beta_question": beta_q}
    if collect:
        aux["alpha"] = {CC: a_cc, CQC: a_cqc, QC: a_qc, QCQ: a_qcq}
    return out_q, out_c, aux
