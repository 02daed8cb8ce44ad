"""Gradient verification: every differentiable op plus one end-to-end model.

Each case builds a deterministic scalar loss in float64 and compares the
tape's analytic gradients against central finite differences. The weights
multiplying each op output are fixed random constants so a transposed or
mis-broadcast gradient cannot cancel out of the comparison.
"""

from __future__ import annotations

import numpy as np

from . import numeric as nc
from .data.windows import Batch
from .graph import HeteroGraph, build_metapaths
from .model import ModelConfig, ModelParams, VocabProfile, bce_loss, forward
from .numeric import Rng, Tensor, check_gradients, dtype_scope

GRAD_TOL = 1e-5


def _param(rng: np.random.Generator, shape) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return nc.tsum(out * Tensor(w))


def _op_cases(rng: np.random.Generator) -> dict:
    """name -> (build_loss, params) covering every differentiable op."""
    cases = {}

    def case(name, params, build):
        cases[name] = (build, params)

    a = _param(rng, (2, 3))
    b = _param(rng, (2, 3))
    w = rng.uniform(0.5, 1.5, size=(2, 3))
    case("add", {"a": a, "b": b}, lambda a=a, b=b, w=w: _weighted(a + b, w))
    case("neg", {"a": a}, lambda a=a, w=w: _weighted(nc.neg(a), w))
    case("mul", {"a": a, "b": b}, lambda a=a, b=b, w=w: _weighted(a * b, w))
    case("add-broadcast", {"a": a, "r": (r := _param(rng, (3,)))},
         lambda a=a, r=r, w=w: _weighted(a + r, w))
    case("mul-broadcast", {"a": a, "r2": (r2 := _param(rng, (3,)))},
         lambda a=a, r2=r2, w=w: _weighted(a * r2, w))

    m1 = _param(rng, (3, 4))
    m2 = _param(rng, (4, 2))
    wm = rng.uniform(0.5, 1.5, size=(3, 2))
    case("matmul", {"m1": m1, "m2": m2}, lambda m1=m1, m2=m2, wm=wm: _weighted(nc.matmul(m1, m2), wm))
    b1 = _param(rng, (2, 3, 4))
    b2 = _param(rng, (2, 4, 2))
    wb = rng.uniform(0.5, 1.5, size=(2, 3, 2))
    case("matmul-batched", {"b1": b1, "b2": b2},
         lambda b1=b1, b2=b2, wb=wb: _weighted(nc.matmul(b1, b2), wb))

    wt = rng.uniform(0.5, 1.5, size=(3, 2))
    case("transpose", {"a": a}, lambda a=a, wt=wt: _weighted(nc.transpose(a, (1, 0)), wt))
    wf = rng.uniform(0.5, 1.5, size=(6,))
    case("reshape", {"a": a}, lambda a=a, wf=wf: _weighted(nc.reshape(a, (6,)), wf))
    wc = rng.uniform(0.5, 1.5, size=(4, 3))
    case("concat", {"a": a, "b": b}, lambda a=a, b=b, wc=wc: _weighted(nc.concat([a, b], axis=0), wc))
    ws = rng.uniform(0.5, 1.5, size=(2, 2, 3))
    case("stack", {"a": a, "b": b}, lambda a=a, b=b, ws=ws: _weighted(nc.stack([a, b], axis=0), ws))

    table = _param(rng, (5, 3))
    ids = np.array([0, 2, 2, 4])  # a repeated row checks gradient accumulation
    wg = rng.uniform(0.5, 1.5, size=(4, 3))
    case("gather_rows", {"table": table}, lambda table=table: _weighted(nc.gather_rows(table, ids), wg))

    case("tsum", {"a": a}, lambda a=a: nc.tsum(a) * 0.7)
    wx = rng.uniform(0.5, 1.5, size=(2, 1))
    case("tsum-axis", {"a": a},
         lambda a=a, wx=wx: _weighted(nc.tsum(a, axis=1, keepdims=True), wx))
    case("tmean", {"a": a}, lambda a=a: nc.tmean(a) * 1.3)

    pos = Tensor(rng.uniform(0.3, 2.0, size=(2, 3)), requires_grad=True)
    case("log", {"pos": pos}, lambda pos=pos, w=w: _weighted(nc.log(pos), w))

    # kept away from the clip edges so finite differences stay one-sided-free
    cl = Tensor(np.array([[-0.9, -0.3, 0.1], [0.7, -0.45, 0.2]]), requires_grad=True)
    case("clip", {"cl": cl}, lambda cl=cl, w=w: _weighted(nc.clip(cl, -0.5, 0.5), w))
    lk = Tensor(np.array([[-0.9, -0.3, 0.4], [1.2, -1.1, 0.6]]), requires_grad=True)
    case("leaky_relu", {"lk": lk}, lambda lk=lk, w=w: _weighted(nc.leaky_relu(lk), w))

    case("sigmoid", {"a": a}, lambda a=a, w=w: _weighted(nc.sigmoid(a), w))
    case("tanh", {"a": a}, lambda a=a, w=w: _weighted(nc.tanh(a), w))
    case("gelu", {"a": a}, lambda a=a, w=w: _weighted(nc.gelu(a), w))
    wsm = rng.uniform(0.5, 1.5, size=(2, 3))
    case("softmax", {"a": a}, lambda a=a, wsm=wsm: _weighted(nc.softmax(a, axis=-1), wsm))

    x = _param(rng, (2, 6))
    gamma = Tensor(rng.uniform(0.5, 1.5, size=(6,)), requires_grad=True)
    beta = _param(rng, (6,))
    wl = rng.uniform(0.5, 1.5, size=(2, 6))
    case("layer_norm", {"x": x, "gamma": gamma, "beta": beta},
         lambda x=x, gamma=gamma, beta=beta, wl=wl: _weighted(nc.layer_norm(x, gamma, beta), wl))

    # inference-mode dropout is the identity; training mode is excluded
    # because finite differences need a deterministic loss
    case("dropout-inference", {"a": a},
         lambda a=a, w=w: _weighted(nc.dropout(a, 0.5, Rng(0), training=False), w))
    return cases


def _tiny_model_case(rng: np.random.Generator):
    config = ModelConfig(
        layers=1, heads=1, d_hidden=8, d_intermediate=8, dropout=0.0,
        max_seq_len=4, han=True, han_in_dim=3, han_hidden_dim=4, han_heads=2,
    )
    profile = VocabProfile(
        question_id=6, question_type=3, difficulty=3, discrimination=3,
        activity=3, concept_id=5, area=3, content_type=3,
        elapsed=6, lag=6, prev_response=4,
    )
    graph = HeteroGraph(
        concept_ids=["c0", "c1", "c2"],
        question_ids=["q0", "q1", "q2"],
        cc_edges=[(0, 1), (1, 2)],
        cq_edges=[(q % 3, q) for q in range(3)] + [((q + 1) % 3, q) for q in range(3)],
        concept_features=rng.uniform(-1.0, 1.0, size=(3, 3)),
        question_features=rng.uniform(-1.0, 1.0, size=(3, 3)),
    )
    metapaths = build_metapaths(graph)
    length = 4
    ri = lambda hi: rng.integers(2, hi, size=(2, length))
    batch = Batch(
        student_ids=["s0", "s1"],
        q_id=ri(6), q_type=ri(3), q_diff=ri(3), q_disc=ri(3), q_act=ri(3),
        q_node=np.array([[0, 1, 2, -1], [2, 0, -1, 1]]),
        c_id=ri(5), c_area=ri(3), c_ctype=ri(3),
        c_node=np.array([[1, 0, -1, 2], [0, 2, 1, -1]]),
        position=np.tile(np.arange(length), (2, 1)),
        prev_resp=np.concatenate([np.ones((2, 1), dtype=np.int64), ri(4)[:, 1:]], axis=1),
        prev_elapsed=np.concatenate([np.ones((2, 1), dtype=np.int64), ri(6)[:, 1:]], axis=1),
        prev_lag=np.concatenate([np.ones((2, 1), dtype=np.int64), ri(6)[:, 1:]], axis=1),
        labels=rng.integers(0, 2, size=(2, length)).astype(np.float32),
        mask=np.array([[1, 1, 1, 1], [1, 1, 1, 0]], dtype=np.float32),
    )
    params = ModelParams.init(config, profile, Rng(7).child(1))

    def build_loss():
        y_hat, _ = forward(
            batch, params, config, Rng(0), training=False,
            graph=graph, metapaths=metapaths,
        )
        return bce_loss(y_hat, batch.labels, batch.mask)

    return build_loss, params.named()


def gradient_suite() -> dict[str, dict]:
    """Run every case in float64; returns name -> check_gradients result."""
    results = {}
    with dtype_scope(np.float64):
        rng = np.random.default_rng(20240501)
        for name, (build_loss, params) in _op_cases(rng).items():
            results[name] = check_gradients(build_loss, params)
        build_loss, params = _tiny_model_case(rng)
        results["model-end-to-end"] = check_gradients(build_loss, params)
    return results


def suite_max_error(results: dict[str, dict]) -> float:
    return max(r["__max__"] for r in results.values())
