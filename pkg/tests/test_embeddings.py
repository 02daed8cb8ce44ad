"""Embedding file format, hash fallback, and PCA, with an independent eigen oracle."""

import numpy as np
import pytest

from pickt.embeddings import (
    SOURCE_EXTERNAL,
    SOURCE_HASH,
    EmbeddingTable,
    hash_embed,
    pca_fit,
    pca_transform,
    read_table,
    reduce_to_width,
    write_table,
)
from pickt.errors import DataError, DimensionError, ParameterError
from pickt.numeric import Rng


def _table(n=20, d=8, seed=0, source=SOURCE_EXTERNAL):
    m = Rng(seed).normal((n, d))
    return EmbeddingTable(ids=[f"id{i}" for i in range(n)], matrix=m, source=source, model_tag="test-model v1")


def _power_iteration_pca(x: np.ndarray, k: int, iters: int = 4000):
    """Independent oracle: power iteration with deflation on the covariance."""
    x = x.astype(np.float64)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = (xc.T @ xc) / x.shape[0]
    d = cov.shape[0]
    comps = []
    vals = []
    work = cov.copy()
    rng = np.random.default_rng(12345)
    for _ in range(k):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        for _ in range(iters):
            w = work @ v
            nw = np.linalg.norm(w)
            if nw == 0:
                break
            v = w / nw
        lam = float(v @ work @ v)
        comps.append(v.copy())
        vals.append(lam)
        work = work - lam * np.outer(v, v)  # deflate
    return mean, np.stack(comps, axis=1), np.array(vals)


class TestFileFormat:
    def test_round_trip_bit_identical(self, tmp_path):
        t = _table(seed=3)
        p = write_table(t, tmp_path / "x.emb")
        r = read_table(p)
        assert r.ids == t.ids
        assert r.matrix.tobytes() == t.matrix.tobytes()
        assert r.source == t.source
        assert r.model_tag == t.model_tag
        # file itself is byte-stable across rewrites
        data1 = p.read_bytes()
        write_table(r, tmp_path / "y.emb")
        assert (tmp_path / "y.emb").read_bytes() == data1

    def test_source_flags(self, tmp_path):
        for source in (SOURCE_EXTERNAL, SOURCE_HASH):
            p = write_table(_table(source=source), tmp_path / f"{source}.emb")
            assert read_table(p).source == source

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.emb"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        (tmp_path / "bad.emb.ids").write_text("")
        with pytest.raises(DataError, match="magic"):
            read_table(p)

    def test_bad_version(self, tmp_path):
        t = _table(n=2, d=2)
        p = write_table(t, tmp_path / "v.emb")
        raw = bytearray(p.read_bytes())
        raw[8] = 9
        p.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="version"):
            read_table(p)

    def test_truncated_payload(self, tmp_path):
        t = _table(n=4, d=4)
        p = write_table(t, tmp_path / "t.emb")
        raw = p.read_bytes()
        p.write_bytes(raw[:-8])
        with pytest.raises(DataError, match="payload length"):
            read_table(p)

    def test_ids_count_mismatch(self, tmp_path):
        t = _table(n=3, d=2)
        p = write_table(t, tmp_path / "i.emb")
        (tmp_path / "i.emb.ids").write_text("only-one\n")
        with pytest.raises(DataError, match="sidecar"):
            read_table(p)

    def test_table_invariants(self):
        with pytest.raises(DataError, match="duplicate"):
            EmbeddingTable(["a", "a"], np.zeros((2, 2)), SOURCE_HASH, "")
        with pytest.raises(DataError, match="finite"):
            EmbeddingTable(["a"], np.array([[np.nan, 0.0]]), SOURCE_HASH, "")
        with pytest.raises(DimensionError):
            EmbeddingTable(["a", "b"], np.zeros((3, 2)), SOURCE_HASH, "")


class TestHashEmbed:
    def test_identical_texts_identical_rows(self):
        t = hash_embed(["same text here", "same text here", "other"], ["a", "b", "c"], 32)
        np.testing.assert_array_equal(t.matrix[0], t.matrix[1])
        assert not np.array_equal(t.matrix[0], t.matrix[2])
        assert t.source == SOURCE_HASH

    def test_empty_text_zero_row(self):
        t = hash_embed(["", "something"], ["a", "b"], 16)
        assert np.all(t.matrix[0] == 0)
        assert np.linalg.norm(t.matrix[1]) == pytest.approx(1.0, abs=1e-5)

    def test_rows_l2_normalized(self):
        t = hash_embed([f"text number {i} with words" for i in range(50)], [str(i) for i in range(50)], 64)
        norms = np.linalg.norm(t.matrix, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-5)

    def test_collision_rate_under_point_one_percent(self):
        rng = np.random.default_rng(7)
        alphabet = "abcdefghijklmnopqrstuvwxyz "
        texts = list({"".join(rng.choice(list(alphabet), size=20)) for _ in range(1100)})[:1000]
        assert len(texts) == 1000
        t = hash_embed(texts, [str(i) for i in range(1000)], 64)
        seen = {}
        collisions = 0
        for i in range(1000):
            key = t.matrix[i].tobytes()
            if key in seen:
                collisions += 1
            seen[key] = i
        assert collisions / 1000 < 0.001

    def test_short_text_nonzero(self):
        t = hash_embed(["ab"], ["a"], 8)
        assert np.linalg.norm(t.matrix[0]) > 0

    def test_bad_width(self):
        with pytest.raises(ParameterError):
            hash_embed(["x"], ["a"], 0)


class TestPca:
    def test_rank_one_data(self):
        # points on a 1-d line in 2-d
        s = np.linspace(-3, 3, 30)
        x = np.stack([2 * s + 1, -s + 4], axis=1)
        t = EmbeddingTable([str(i) for i in range(30)], x, SOURCE_EXTERNAL, "")
        m = pca_fit(t, 1)
        np.testing.assert_allclose(m.explained_variance_ratio, [1.0], atol=1e-7)

    def test_full_k_reconstruction(self):
        t = _table(n=40, d=6, seed=5)
        m = pca_fit(t, 6)
        z = pca_transform(m, t)
        recon = z.matrix.astype(np.float64) @ m.components.T + m.mean
        np.testing.assert_allclose(recon, t.matrix, atol=1e-5)

    def test_matches_power_iteration_oracle(self):
        t = _table(n=100, d=10, seed=9)
        m = pca_fit(t, 3)
        _, comps_oracle, vals_oracle = _power_iteration_pca(t.matrix, 3)
        for j in range(3):
            a = m.components[:, j]
            b = comps_oracle[:, j]
            # oracle has arbitrary sign
            err = min(np.abs(a - b).max(), np.abs(a + b).max())
            assert err < 1e-4, f"component {j}: {err}"

    def test_orthonormal_columns(self):
        t = _table(n=60, d=12, seed=2)
        m = pca_fit(t, 5)
        gram = m.components.T @ m.components
        np.testing.assert_allclose(gram, np.eye(5), atol=1e-4)
        assert all(
            m.explained_variance_ratio[i] >= m.explained_variance_ratio[i + 1] - 1e-12
            for i in range(4)
        )

    def test_sign_convention_deterministic(self):
        t = _table(n=50, d=8, seed=4)
        a = pca_fit(t, 4)
        b = pca_fit(t, 4)
        np.testing.assert_array_equal(a.components, b.components)
        for j in range(4):
            i = int(np.argmax(np.abs(a.components[:, j])))
            assert a.components[i, j] > 0

    def test_transform_mean_is_zero(self):
        t = _table(n=30, d=5, seed=6)
        m = pca_fit(t, 3)
        mean_table = EmbeddingTable(["m"], m.mean[None, :], SOURCE_EXTERNAL, "")
        z = pca_transform(m, mean_table)
        np.testing.assert_allclose(z.matrix, 0.0, atol=1e-6)

    def test_transformed_column_variance_matches_eigenvalue(self):
        t = _table(n=200, d=8, seed=8)
        m = pca_fit(t, 4)
        z = pca_transform(m, t).matrix.astype(np.float64)
        x = t.matrix.astype(np.float64)
        xc = x - x.mean(axis=0)
        eigvals = np.linalg.eigvalsh((xc.T @ xc) / x.shape[0])[::-1]
        np.testing.assert_allclose(z.var(axis=0), eigvals[:4], atol=1e-4)

    def test_distance_preservation_k_equals_d(self):
        t = _table(n=25, d=6, seed=11)
        m = pca_fit(t, 6)
        z = pca_transform(m, t).matrix
        for i in (0, 5, 9):
            for j in (3, 17):
                d0 = np.linalg.norm(t.matrix[i].astype(np.float64) - t.matrix[j].astype(np.float64))
                d1 = np.linalg.norm(z[i].astype(np.float64) - z[j].astype(np.float64))
                assert abs(d0 - d1) < 1e-4

    def test_k_out_of_range(self):
        t = _table(n=5, d=8)
        with pytest.raises(ParameterError):
            pca_fit(t, 6)  # k > n
        with pytest.raises(ParameterError):
            pca_fit(t, 0)

    def test_transform_dim_mismatch(self):
        m = pca_fit(_table(n=20, d=8), 3)
        with pytest.raises(DimensionError):
            pca_transform(m, _table(n=4, d=5))


class TestReduceToWidth:
    def test_shared_projection(self):
        q = _table(n=80, d=16, seed=1)
        c = _table(n=30, d=16, seed=2)
        model, (qr, cr) = reduce_to_width([q, c], 4)
        assert model is not None
        assert qr.matrix.shape == (80, 4)
        assert cr.matrix.shape == (30, 4)
        # shared projection: transforming q alone with the model agrees
        np.testing.assert_allclose(pca_transform(model, q).matrix, qr.matrix, atol=1e-6)

    def test_identity_when_width_matches(self):
        q = _table(n=10, d=4)
        model, (qr,) = reduce_to_width([q], 4)
        assert model is None
        assert qr is q

    def test_cannot_widen(self):
        with pytest.raises(ParameterError):
            reduce_to_width([_table(n=10, d=4)], 8)
