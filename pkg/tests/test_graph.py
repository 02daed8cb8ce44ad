"""Meta-path construction and graph attention, against brute-force oracles."""

import numpy as np
import pytest

import pickt.numeric as nc
from pickt.graph import (
    CC,
    CQC,
    QC,
    QCQ,
    HeteroGraph,
    MetaPathAdjacency,
    build_metapaths,
    graph_from_dataset,
)
from pickt.data import load_dataset, synth_generate
from pickt.embeddings import SOURCE_HASH, EmbeddingTable, hash_embed
from pickt.errors import DataError
from pickt.model.han import HanParams, han_forward, node_attention, semantic_attention
from pickt.numeric import Rng, Tape, Tensor


def _graph(n_c=4, n_q=5, cc=(), cq=(), k=8, seed=0):
    rng = Rng(seed)
    return HeteroGraph(
        concept_ids=[f"c{i}" for i in range(n_c)],
        question_ids=[f"q{i}" for i in range(n_q)],
        cc_edges=list(cc),
        cq_edges=list(cq),
        concept_features=rng.normal((n_c, k)),
        question_features=rng.child(1).normal((n_q, k)),
    )


class TestMetaPaths:
    def test_isolated_concept_self_only(self):
        g = _graph(n_c=3, n_q=1, cc=[(0, 1)], cq=[(0, 0)])
        mp = build_metapaths(g)
        assert mp[CC].neighbors[2] == [2]  # isolated -> self only
        assert set(mp[CC].neighbors[0]) == {0, 1}
        assert set(mp[CC].neighbors[1]) == {0, 1}  # symmetrized

    def test_two_questions_sharing_concept_in_qcq(self):
        g = _graph(n_c=2, n_q=3, cq=[(0, 0), (0, 1), (1, 2)])
        mp = build_metapaths(g)
        assert 1 in mp[QCQ].neighbors[0] and 0 in mp[QCQ].neighbors[1]
        assert mp[QCQ].neighbors[2] == [2]

    def test_qc_layout(self):
        g = _graph(n_c=3, n_q=2, cq=[(1, 0), (2, 0)])
        mp = build_metapaths(g)
        # self-loop in the question block, concepts offset by n_q
        assert mp[QC].neighbors[0] == [0, 2 + 1, 2 + 2]
        assert mp[QC].neighbors[1] == [1]
        assert mp[QC].n_sources == 2 + 3

    def test_cqc_shares_question(self):
        g = _graph(n_c=4, n_q=2, cq=[(0, 0), (1, 0), (2, 1)])
        mp = build_metapaths(g)
        assert set(mp[CQC].neighbors[0]) == {0, 1}
        assert set(mp[CQC].neighbors[1]) == {0, 1}
        assert mp[CQC].neighbors[2] == [2]
        assert mp[CQC].neighbors[3] == [3]

    def test_random_graph_matches_brute_force(self):
        rng = np.random.default_rng(3)
        n_c, n_q = 8, 12
        cq = sorted({(int(rng.integers(0, n_c)), int(rng.integers(0, n_q))) for _ in range(30)})
        cc = sorted({(int(rng.integers(0, n_c)), int(rng.integers(0, n_c))) for _ in range(10)})
        g = _graph(n_c=n_c, n_q=n_q, cc=cc, cq=cq)
        mp = build_metapaths(g)
        # brute force QCQ: double loop over question pairs
        concepts_of = [set(c for c, q in cq if q == j) for j in range(n_q)]
        for i in range(n_q):
            want = {i} | {j for j in range(n_q) if concepts_of[i] & concepts_of[j]}
            assert set(mp[QCQ].neighbors[i]) == want
        # brute force CQC
        questions_of = [set(q for c, q in cq if c == i) for i in range(n_c)]
        for i in range(n_c):
            want = {i} | {j for j in range(n_c) if questions_of[i] & questions_of[j]}
            assert set(mp[CQC].neighbors[i]) == want

    def test_masks_match_lists(self):
        g = _graph(cc=[(0, 1)], cq=[(0, 0), (1, 1)])
        for adj in build_metapaths(g).values():
            for i, neigh in enumerate(adj.neighbors):
                assert set(np.flatnonzero(adj.mask[i]).tolist()) == set(neigh)

    def test_graph_from_dataset(self, tmp_path):
        d = synth_generate(5, 12, 4, 6, tmp_path / "g")
        ds = load_dataset(d)
        qt = hash_embed([q.text for q in ds.questions.values()], list(ds.questions), 16)
        ct = hash_embed([c.text for c in ds.concepts.values()], list(ds.concepts), 16)
        g = graph_from_dataset(ds, ct, qt)
        assert g.n_questions == 12 and g.n_concepts == 4
        mp = build_metapaths(g)
        assert all(mp[tag].mask.sum() > 0 for tag in (CC, CQC, QC, QCQ))

    def test_missing_feature_row_rejected(self, tmp_path):
        d = synth_generate(4, 6, 3, 2, tmp_path / "m")
        ds = load_dataset(d)
        qt = hash_embed(["x"] * 5, list(ds.questions)[:5], 8)  # one question missing
        ct = hash_embed([c.text for c in ds.concepts.values()], list(ds.concepts), 8)
        with pytest.raises(DataError, match="missing"):
            graph_from_dataset(ds, ct, qt)


def _single_head_attention_oracle(target_h, source_h, mask, a_tgt, a_src):
    """Dense reference with plain numpy loops (one head)."""
    from math import erf, sqrt

    n_t, n_s = mask.shape
    out = np.zeros((n_t, source_h.shape[1]))
    alphas = np.zeros((n_t, n_s))
    for i in range(n_t):
        scores = []
        for j in range(n_s):
            e = float(a_tgt @ target_h[i] + a_src @ source_h[j])
            e = e if e >= 0 else 0.2 * e
            scores.append(e if mask[i, j] else -np.inf)
        scores = np.array(scores)
        m = scores.max()
        w = np.exp(scores - m)
        w = w / w.sum()
        alphas[i] = w
        agg = (w[:, None] * source_h).sum(axis=0)
        gelu = np.array([v * 0.5 * (1.0 + erf(v / sqrt(2.0))) for v in agg])
        out[i] = gelu + target_h[i]  # skip keeps own features past the softmax
    return out, alphas


class TestNodeAttention:
    def test_self_only_alpha_one(self):
        adj = MetaPathAdjacency("CC", 2, 2, [[0], [1]])
        h = Tensor(Rng(0).normal((2, 8)))
        a_tgt = Tensor(Rng(1).normal((1, 8)))
        a_src = Tensor(Rng(2).normal((1, 8)))
        _, alpha = node_attention(h, h, adj, a_tgt, a_src)
        np.testing.assert_allclose(alpha.data[0, 0, 0], 1.0, atol=1e-6)
        np.testing.assert_allclose(alpha.data[0, 0, 1], 0.0, atol=0)
        np.testing.assert_allclose(alpha.data[0, 1, 1], 1.0, atol=1e-6)

    def test_identical_neighbors_split_evenly(self):
        feats = np.tile(Rng(3).normal((1, 8)), (2, 1))
        adj = MetaPathAdjacency("CC", 1, 2, [[0, 1]])
        target = Tensor(Rng(4).normal((1, 8)))
        _, alpha = node_attention(target, Tensor(feats), adj, Tensor(Rng(5).normal((1, 8))), Tensor(Rng(6).normal((1, 8))))
        np.testing.assert_allclose(alpha.data[0, 0], [0.5, 0.5], atol=1e-6)

    def test_matches_dense_oracle(self):
        nc.set_default_dtype(np.float64)
        rng = Rng(7)
        n_t, n_s, hw = 3, 3, 8
        target = rng.normal((n_t, hw))
        source = rng.child(1).normal((n_s, hw))
        a_t = rng.child(2).normal((1, hw))
        a_s = rng.child(3).normal((1, hw))
        adj = MetaPathAdjacency("CC", n_t, n_s, [[0, 1], [1], [0, 1, 2]])
        out, alpha = node_attention(Tensor(target), Tensor(source), adj, Tensor(a_t), Tensor(a_s))
        want_out, want_alpha = _single_head_attention_oracle(target, source, adj.mask, a_t[0], a_s[0])
        np.testing.assert_allclose(alpha.data[0], want_alpha, atol=1e-5)
        np.testing.assert_allclose(out.data, want_out, atol=1e-5)

    def test_alpha_rows_sum_to_one(self):
        adj = MetaPathAdjacency("QCQ", 4, 4, [[0, 1, 2], [1], [0, 2], [0, 1, 2, 3]])
        h = Tensor(Rng(8).normal((4, 16)))
        _, alpha = node_attention(h, h, adj, Tensor(Rng(9).normal((2, 8))), Tensor(Rng(10).normal((2, 8))))
        np.testing.assert_allclose(alpha.data.sum(axis=-1), 1.0, atol=1e-6)
        # masked entries exactly zero
        assert alpha.data[0, 1, 0] == 0.0


class TestSemanticAttention:
    def _params(self, hidden=16, seed=0):
        rng = Rng(seed)
        return (
            Tensor(rng.normal((hidden, hidden)), True),
            Tensor(rng.child(1).normal((hidden,)), True),
            Tensor(rng.child(2).normal((hidden,)), True),
        )

    def test_single_path_identity(self):
        w, b, q = self._params()
        z = Tensor(Rng(3).normal((5, 16)))
        fused, beta = semantic_attention({"CC": z}, w, b, q)
        np.testing.assert_allclose(beta.data, [1.0], atol=1e-7)
        np.testing.assert_allclose(fused.data, z.data, atol=1e-6)

    def test_identical_paths_split_evenly(self):
        w, b, q = self._params(seed=4)
        z = Tensor(Rng(5).normal((6, 16)))
        z2 = Tensor(z.data.copy())
        fused, beta = semantic_attention({"A": z, "B": z2}, w, b, q)
        np.testing.assert_allclose(beta.data, [0.5, 0.5], atol=1e-6)
        np.testing.assert_allclose(fused.data, z.data, atol=1e-5)

    def test_three_paths_weighted_sum_oracle(self):
        nc.set_default_dtype(np.float64)
        w, b, q = self._params(seed=6)
        zs = {k: Tensor(Rng(10 + i).normal((4, 16))) for i, k in enumerate("ABC")}
        fused, beta = semantic_attention(zs, w, b, q)
        assert beta.data.sum() == pytest.approx(1.0, abs=1e-6)
        # direct formula evaluation
        ws = []
        for z in zs.values():
            t = np.tanh(z.data @ w.data + b.data)
            ws.append(float((t @ q.data).mean()))
        e = np.exp(ws - np.max(ws))
        beta_want = e / e.sum()
        np.testing.assert_allclose(beta.data, beta_want, atol=1e-6)
        z_want = sum(bw * z.data for bw, z in zip(beta_want, zs.values()))
        np.testing.assert_allclose(fused.data, z_want, atol=1e-6)


class TestHanForward:
    def _setup(self, seed=0, in_dim=8, hidden=16, heads=2, out_dim=12):
        g = _graph(n_c=4, n_q=6, cc=[(0, 1), (2, 3)], cq=[(0, 0), (0, 1), (1, 2), (2, 3), (3, 4), (3, 5)], k=in_dim, seed=seed)
        mp = build_metapaths(g)
        params = HanParams.init(Rng(seed + 100), in_dim=in_dim, hidden=hidden, heads=heads, out_dim=out_dim)
        return g, mp, params

    def test_shapes_and_beta(self):
        g, mp, params = self._setup()
        q_emb, c_emb, aux = han_forward(g, mp, params)
        assert q_emb.shape == (6, 12) and c_emb.shape == (4, 12)
        np.testing.assert_allclose(aux["beta_concept"].data.sum(), 1.0, atol=1e-6)
        np.testing.assert_allclose(aux["beta_question"].data.sum(), 1.0, atol=1e-6)

    def test_zero_features_zero_outputs(self):
        g, mp, params = self._setup()
        g.concept_features[:] = 0
        g.question_features[:] = 0
        params.sem_b.data[:] = 0
        q_emb, c_emb, _ = han_forward(g, mp, params)
        np.testing.assert_array_equal(q_emb.data, 0.0)
        np.testing.assert_array_equal(c_emb.data, 0.0)

    def test_permutation_equivariance(self):
        nc.set_default_dtype(np.float64)
        g, mp, params = self._setup(seed=2)
        q_emb, c_emb, _ = han_forward(g, mp, params)
        # relabel concepts with a permutation
        perm = [2, 0, 3, 1]
        inv = np.argsort(perm)
        g2 = HeteroGraph(
            concept_ids=[g.concept_ids[i] for i in perm],
            question_ids=list(g.question_ids),
            cc_edges=[(int(inv[s]), int(inv[d])) for s, d in g.cc_edges],
            cq_edges=[(int(inv[c]), q) for c, q in g.cq_edges],
            concept_features=g.concept_features[perm],
            question_features=g.question_features,
        )
        q2, c2, _ = han_forward(g2, build_metapaths(g2), params)
        np.testing.assert_allclose(c2.data, c_emb.data[perm], atol=1e-10)
        np.testing.assert_allclose(q2.data, q_emb.data, atol=1e-10)

    def test_gradients_match_finite_differences(self):
        nc.set_default_dtype(np.float64)
        g, mp, params = self._setup(seed=3, in_dim=4, hidden=8, heads=2, out_dim=6)
        named = params.named()
        from pickt.numeric.gradcheck import check_gradients

        def loss():
            q_emb, c_emb, _ = han_forward(g, mp, params)
            return nc.tsum(nc.mul(q_emb, q_emb)) + nc.tsum(nc.tanh(c_emb))

        report = check_gradients(loss, named)
        assert report["__max__"] < 1e-5, report
