"""Training-loop behavior: determinism, checkpoints, logs, abort paths."""

import numpy as np
import pytest

from pickt.data.loader import load_dataset
from pickt.data.schema import build_vocabs
from pickt.data.synth import synth_generate
from pickt.embeddings import hash_embed, write_table
from pickt.errors import NumericalError, ParameterError
from pickt.model import ModelConfig, bce_loss, load_model
from pickt.numeric import Rng, Tensor
from pickt.train import (
    LOG_HEADER,
    TrainConfig,
    bce_value,
    build_windows,
    predict_windows,
    prepare_graph,
    train_model,
)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "data"
    synth_generate(8, 12, 4, seed=5, out_dir=out, interactions_per_student=(10, 14))
    return load_dataset(out)


def small_config(**kw):
    base = dict(
        layers=1, heads=2, d_hidden=16, d_intermediate=16, dropout=0.1,
        max_seq_len=16, han=False, han_in_dim=8, han_hidden_dim=8, han_heads=2,
    )
    base.update(kw)
    return ModelConfig(**base)


def split_records(dataset, n_val_students=2):
    students = sorted({r.student_id for r in dataset.interactions})
    val = set(students[:n_val_students])
    train_records = [r for r in dataset.interactions if r.student_id not in val]
    val_records = [r for r in dataset.interactions if r.student_id in val]
    return train_records, val_records


def test_train_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(epochs=-1)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    with pytest.raises(ParameterError):
        TrainConfig(lr=0.0)


def test_prepare_graph_off_when_han_disabled(tiny_dataset):
    assert prepare_graph(tiny_dataset, small_config(han=False)) is None


def test_prepare_graph_hash_fallback(tiny_dataset):
    bundle = prepare_graph(tiny_dataset, small_config(han=True))
    assert bundle.pca is None  # hashing already produces the target width
    assert bundle.graph.feature_dim == 8
    assert bundle.graph.question_ids == list(tiny_dataset.questions)
    assert bundle.graph.concept_ids == list(tiny_dataset.concepts)
    assert bundle.question_nodes[bundle.graph.question_ids[3]] == 3


def test_prepare_graph_reduces_external_tables(tiny_dataset, tmp_path):
    qids = list(tiny_dataset.questions)
    cids = list(tiny_dataset.concepts)
    write_table(hash_embed([q.text for q in tiny_dataset.questions.values()], qids, 12),
                tmp_path / "q_text.emb")
    write_table(hash_embed([c.text for c in tiny_dataset.concepts.values()], cids, 12),
                tmp_path / "c_text.emb")
    bundle = prepare_graph(tiny_dataset, small_config(han=True), embeddings_dir=tmp_path)
    assert bundle.pca is not None
    assert bundle.graph.feature_dim == 8


def test_zero_epochs_checkpoint_equals_init(tiny_dataset, tmp_path):
    train_records, val_records = split_records(tiny_dataset)
    config = small_config()
    result = train_model(
        tiny_dataset, train_records, val_records, config,
        TrainConfig(epochs=0, batch_size=8, seed=3), run_dir=tmp_path,
    )
    assert result.best_epoch == 0
    assert result.history == []
    params, _, _, meta = load_model(tmp_path / "last.ckpt", Rng(99))
    from pickt.model import ModelParams, VocabProfile

    fresh = ModelParams.init(config, VocabProfile.from_vocabs(result.vocabs), Rng(3).child(1))
    for name, tensor in fresh.named().items():
        assert np.array_equal(tensor.data, params.named()[name].data), name
    assert (tmp_path / "epochs.csv").read_text() == LOG_HEADER + "\n"
    assert meta["step"] == 0


def test_same_seed_runs_are_byte_identical(tiny_dataset, tmp_path):
    train_records, val_records = split_records(tiny_dataset)
    config = small_config(dropout=0.2)
    for d in ("a", "b"):
        train_model(
            tiny_dataset, train_records, val_records, config,
            TrainConfig(epochs=2, batch_size=4, seed=11), run_dir=tmp_path / d,
        )
    for name in ("epochs.csv", "last.ckpt", "best.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    train_model(
        tiny_dataset, train_records, val_records, config,
        TrainConfig(epochs=2, batch_size=4, seed=12), run_dir=tmp_path / "c",
    )
    assert (tmp_path / "a" / "epochs.csv").read_bytes() != (tmp_path / "c" / "epochs.csv").read_bytes()


def test_epoch_log_layout(tiny_dataset, tmp_path):
    train_records, val_records = split_records(tiny_dataset)
    train_model(
        tiny_dataset, train_records, val_records, small_config(),
        TrainConfig(epochs=3, batch_size=8, seed=0), run_dir=tmp_path,
    )
    lines = (tmp_path / "epochs.csv").read_text().splitlines()
    assert lines[0] == "epoch,split,loss,acc_wrong,acc_correct,acc_macro,acc_micro,auc"
    assert len(lines) == 1 + 3 * 2
    for i, epoch in enumerate((1, 2, 3)):
        train_row = lines[1 + 2 * i].split(",")
        val_row = lines[2 + 2 * i].split(",")
        assert train_row[:2] == [str(epoch), "train"]
        assert val_row[:2] == [str(epoch), "val"]
        for cell in train_row[2:] + val_row[2:]:
            float(cell)  # 'nan' parses too


def test_nonfinite_loss_aborts_with_location(tiny_dataset, monkeypatch):
    import pickt.train as train_mod

    monkeypatch.setattr(train_mod, "bce_loss", lambda y, lab, m: Tensor(float("nan")))
    train_records, val_records = split_records(tiny_dataset)
    with pytest.raises(NumericalError, match="epoch 1"):
        train_model(
            tiny_dataset, train_records, val_records, small_config(),
            TrainConfig(epochs=1, batch_size=4, seed=0),
        )


def test_training_reduces_loss(tiny_dataset):
    train_records, val_records = split_records(tiny_dataset)
    result = train_model(
        tiny_dataset, train_records, val_records, small_config(dropout=0.0),
        TrainConfig(epochs=5, batch_size=8, lr=3e-3, seed=1),
    )
    assert result.history[-1].train_loss < result.history[0].train_loss


def test_best_checkpoint_reproduces_logged_auc(tiny_dataset, tmp_path):
    train_records, val_records = split_records(tiny_dataset)
    config = small_config()
    result = train_model(
        tiny_dataset, train_records, val_records, config,
        TrainConfig(epochs=3, batch_size=8, lr=3e-3, seed=2), run_dir=tmp_path,
    )
    assert 1 <= result.best_epoch <= 3
    logged = result.history[result.best_epoch - 1].val_report
    params, _, _, meta = load_model(tmp_path / "best.ckpt", Rng(50))
    assert meta["step"] == result.best_epoch
    windows = build_windows(val_records, tiny_dataset, result.vocabs, config)
    preds = predict_windows(params, config, windows)
    from pickt.metrics import compute_metrics

    fresh = compute_metrics(preds.y_hat, preds.labels)
    assert fresh.auc == pytest.approx(logged.auc, abs=1e-12)
    best_scores = [h.val_report.auc for h in result.history]
    assert logged.auc == max(best_scores)


def test_predict_windows_alignment(tiny_dataset):
    train_records, val_records = split_records(tiny_dataset)
    vocabs = build_vocabs(tiny_dataset.questions, tiny_dataset.concepts)
    config = small_config()
    from pickt.model import ModelParams, VocabProfile

    params = ModelParams.init(config, VocabProfile.from_vocabs(vocabs), Rng(0).child(1))
    windows = build_windows(val_records, tiny_dataset, vocabs, config)
    preds = predict_windows(params, config, windows, batch_size=3)
    assert len(preds) == sum(w.length for w in windows)
    expected_qids = [r.question_id for w in windows for r in w.records]
    assert preds.question_ids == expected_qids
    expected_labels = np.concatenate([w.labels[: w.length] for w in windows])
    assert np.array_equal(preds.labels, expected_labels)
    sub = preds.subset(np.arange(len(preds)) < 5)
    assert len(sub) == 5 and sub.question_ids == expected_qids[:5]
    empty = predict_windows(params, config, [])
    assert len(empty) == 0


def test_bce_value_matches_tensor_route(tiny_dataset):
    rng = np.random.default_rng(7)
    y = rng.random(40)
    labels = rng.integers(0, 2, 40).astype(np.float64)
    via_tensor = bce_loss(Tensor(y), labels, np.ones(40)).item()
    assert bce_value(y, labels) == pytest.approx(via_tensor, abs=1e-6)
    assert bce_value(np.zeros(0), np.zeros(0)) == 0.0


def test_restricted_vocab_maps_unseen_question_to_unk(tiny_dataset):
    dropped = sorted(tiny_dataset.questions)[0]
    kept = {q: m for q, m in tiny_dataset.questions.items() if q != dropped}
    vocabs = build_vocabs(kept, tiny_dataset.concepts)
    assert dropped not in vocabs.question
    windows = build_windows(tiny_dataset.interactions, tiny_dataset, vocabs, small_config())
    seen = 0
    for w in windows:
        for t, rec in enumerate(w.records):
            if rec.question_id == dropped:
                assert w.q_id[t] == 0  # UNK row
                seen += 1
            else:
                assert w.q_id[t] >= 2
    assert seen > 0


def test_training_with_graph_attention_enabled(tiny_dataset):
    train_records, val_records = split_records(tiny_dataset)
    result = train_model(
        tiny_dataset, train_records, val_records, small_config(han=True),
        TrainConfig(epochs=1, batch_size=8, seed=4),
    )
    assert result.params.han is not None
    assert result.history[0].val_report is not None
