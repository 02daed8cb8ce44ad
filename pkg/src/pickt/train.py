"""Training loop: seeded mini-batches, Adam, best-checkpoint tracking, CSV logs.

Every source of randomness hangs off one root stream (init, per-epoch
shuffle, per-batch dropout), so a repeated single-threaded run reproduces
the epoch log and both checkpoints byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.loader import Dataset
from .data.schema import Vocabs, build_vocabs
from .data.windows import FeatureEncoder, SequenceWindow, collate, window_sequences
from .embeddings import PcaModel, hash_embed, read_table, reduce_to_width
from .errors import NumericalError, ParameterError
from .graph import HeteroGraph, build_metapaths, graph_from_dataset
from .metrics import EvalReport, compute_metrics, metric_str
from .model import (
    ModelConfig,
    ModelParams,
    VocabProfile,
    bce_loss,
    forward,
    save_checkpoint,
)
from .model.network import PROB_CLAMP
from .numeric import Rng, Tape, Tensor, adam_init, adam_step, backward, zero_grads

LOG_HEADER = "epoch,split,loss,acc_wrong,acc_correct,acc_macro,acc_micro,auc"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 128
    lr: float = 3e-4
    seed: int = 0
    # fraction of valid positions whose question id is swapped for UNK during
    # training; rehearses the unseen-id regime so the text/graph pathway
    # learns to stand in when an id is unknown at inference
    id_unk_rate: float = 0.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size <= 0:
            raise ParameterError(f"batch_size must be positive, got {self.batch_size}")
        if self.lr <= 0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.id_unk_rate < 1.0:
            raise ParameterError(f"id_unk_rate must be in [0, 1), got {self.id_unk_rate}")


@dataclass
class GraphBundle:
    """Knowledge map plus the id -> node-row maps the feature encoder needs."""

    graph: HeteroGraph
    metapaths: dict
    question_nodes: dict[str, int]
    concept_nodes: dict[str, int]
    pca: PcaModel | None = None


def prepare_graph(dataset: Dataset, config: ModelConfig, embeddings_dir=None) -> GraphBundle | None:
    """Build the knowledge map with text features at width han_in_dim.

    External embedding tables (q_text.emb / c_text.emb under embeddings_dir)
    are PCA-reduced to the graph width; without them the hashing fallback
    produces features at the right width directly.
    """
    if not config.han:
        return None
    k = config.han_in_dim
    if embeddings_dir is not None:
        loc = Path(embeddings_dir)
        q_table = read_table(loc / "q_text.emb")
        c_table = read_table(loc / "c_text.emb")
    else:
        q_table = hash_embed([q.text for q in dataset.questions.values()], list(dataset.questions), k)
        c_table = hash_embed([c.text for c in dataset.concepts.values()], list(dataset.concepts), k)
    pca, (q_table, c_table) = reduce_to_width([q_table, c_table], k)
    graph = graph_from_dataset(dataset, c_table, q_table)
    return GraphBundle(
        graph=graph,
        metapaths=build_metapaths(graph),
        question_nodes=graph.question_index(),
        concept_nodes=graph.concept_index(),
        pca=pca,
    )


def feature_encoder(dataset: Dataset, vocabs: Vocabs, bundle: GraphBundle | None = None) -> FeatureEncoder:
    return FeatureEncoder(
        dataset.questions,
        dataset.concepts,
        vocabs,
        question_nodes=bundle.question_nodes if bundle else None,
        concept_nodes=bundle.concept_nodes if bundle else None,
    )


def build_windows(
    records,
    dataset: Dataset,
    vocabs: Vocabs,
    config: ModelConfig,
    bundle: GraphBundle | None = None,
) -> list[SequenceWindow]:
    return window_sequences(records, config.max_seq_len, feature_encoder(dataset, vocabs, bundle))


@dataclass
class Predictions:
    """Flat per-position predictions in deterministic window order."""

    y_hat: np.ndarray
    labels: np.ndarray
    student_ids: list[str]
    question_ids: list[str]
    records: list

    def __len__(self) -> int:
        return self.y_hat.shape[0]

    def subset(self, keep: np.ndarray) -> "Predictions":
        keep = np.asarray(keep, dtype=bool)
        if keep.shape[0] != len(self):
            raise ParameterError(f"subset mask has {keep.shape[0]} entries for {len(self)} predictions")
        idx = np.flatnonzero(keep)
        return Predictions(
            y_hat=self.y_hat[idx],
            labels=self.labels[idx],
            student_ids=[self.student_ids[i] for i in idx],
            question_ids=[self.question_ids[i] for i in idx],
            records=[self.records[i] for i in idx],
        )


def predict_windows(
    params: ModelParams,
    config: ModelConfig,
    windows: list[SequenceWindow],
    bundle: GraphBundle | None = None,
    batch_size: int = 64,
) -> Predictions:
    """Inference-mode forward over windows; keeps only valid positions."""
    graph = bundle.graph if bundle else None
    metapaths = bundle.metapaths if bundle else None
    rng = Rng(0)  # dropout is inactive outside training; stream is never drawn
    ys, labs, sids, qids, recs = [], [], [], [], []
    for start in range(0, len(windows), batch_size):
        chunk = windows[start : start + batch_size]
        batch = collate(chunk)
        y_hat, _ = forward(batch, params, config, rng, training=False, graph=graph, metapaths=metapaths)
        for b, w in enumerate(chunk):
            n = w.length
            ys.append(np.asarray(y_hat.data[b, :n], dtype=np.float64))
            labs.append(np.asarray(w.labels[:n], dtype=np.float64))
            sids.extend([w.student_id] * n)
            rows = w.records if w.records is not None else [None] * n
            qids.extend(r.question_id if r is not None else "" for r in rows)
            recs.extend(rows)
    y = np.concatenate(ys) if ys else np.zeros(0, dtype=np.float64)
    lab = np.concatenate(labs) if labs else np.zeros(0, dtype=np.float64)
    return Predictions(y_hat=y, labels=lab, student_ids=sids, question_ids=qids, records=recs)


def bce_value(y_hat, labels) -> float:
    """Mean binary cross-entropy of already-flattened predictions."""
    p = np.clip(np.asarray(y_hat, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    lab = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        return 0.0
    return float(-(lab * np.log(p) + (1.0 - lab) * np.log(1.0 - p)).mean())


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_report: EvalReport
    val_loss: float | None
    val_report: EvalReport | None


@dataclass
class TrainResult:
    params: ModelParams  # live parameters, final-epoch state
    config: ModelConfig
    profile: VocabProfile
    vocabs: Vocabs
    history: list[EpochRecord]
    best_epoch: int  # 0 when no epoch improved on nothing (no epochs / no val)
    best_arrays: dict = field(repr=False, default_factory=dict)
    run_dir: Path | None = None
    seed: int = 0

    def best_model(self) -> ModelParams:
        params = ModelParams.init(self.config, self.profile, Rng(self.seed).child(1))
        params.load_named(self.best_arrays)
        return params


def _epoch_row(epoch: int, split: str, loss: float, report: EvalReport) -> str:
    cells = [str(epoch), split, f"{loss:.6f}"]
    cells += [metric_str(getattr(report, name)) for name in
              ("acc_wrong", "acc_correct", "acc_macro", "acc_micro", "auc")]
    return ",".join(cells)


def _snapshot(params: ModelParams) -> dict:
    return {name: t.data.copy() for name, t in params.named().items()}


def train_model(
    dataset: Dataset,
    train_records,
    val_records,
    model_config: ModelConfig,
    train_config: TrainConfig,
    vocabs: Vocabs | None = None,
    bundle: GraphBundle | None = None,
    run_dir=None,
) -> TrainResult:
    """Fit the model on train_records, tracking best validation AUC.

    ``vocabs`` defaults to the full dataset tables; passing a restricted
    vocabulary is how held-out questions are kept out of the id space while
    their text and graph features stay live. The epoch log's train rows use
    the training-mode predictions accumulated during the pass (dropout on),
    val rows use a separate inference pass.
    """
    if vocabs is None:
        vocabs = build_vocabs(dataset.questions, dataset.concepts)
    profile = VocabProfile.from_vocabs(vocabs)
    if bundle is None:
        bundle = prepare_graph(dataset, model_config)
    graph = bundle.graph if bundle else None
    metapaths = bundle.metapaths if bundle else None

    train_windows = build_windows(train_records, dataset, vocabs, model_config, bundle)
    if not train_windows:
        raise ParameterError("no training windows (empty train_records)")
    val_windows = build_windows(val_records, dataset, vocabs, model_config, bundle)

    root = Rng(train_config.seed)
    params = ModelParams.init(model_config, profile, root.child(1))
    named = params.named()
    tensors = list(named.values())
    state = adam_init(named)

    history: list[EpochRecord] = []
    rows: list[str] = []
    best_epoch = 0
    best_score = -math.inf
    best_arrays = _snapshot(params)

    for epoch in range(1, train_config.epochs + 1):
        order = root.child(2, epoch).permutation(len(train_windows))
        loss_sum = 0.0
        valid_sum = 0
        epoch_y: list[np.ndarray] = []
        epoch_lab: list[np.ndarray] = []
        for start in range(0, len(order), train_config.batch_size):
            chunk = [train_windows[i] for i in order[start : start + train_config.batch_size]]
            batch = collate(chunk)
            if train_config.id_unk_rate > 0.0:
                u = root.child(4, epoch, start).uniform(batch.q_id.shape)
                hide = (u < train_config.id_unk_rate) & (batch.mask > 0)
                batch.q_id = np.where(hide, 0, batch.q_id)
            with Tape():
                y_hat, _ = forward(
                    batch, params, model_config, root.child(3, epoch, start),
                    training=True, graph=graph, metapaths=metapaths,
                )
                loss = bce_loss(y_hat, batch.labels, batch.mask)
                loss_val = loss.item()
                if not math.isfinite(loss_val):
                    raise NumericalError(
                        f"non-finite training loss {loss_val} at epoch {epoch}, "
                        f"batch offset {start}, students {batch.student_ids[:4]}"
                    )
                backward(loss, params=tensors)
            adam_step(named, {name: t.grad for name, t in named.items()}, state, lr=train_config.lr)
            zero_grads(tensors)
            n_valid = int(batch.mask.sum())
            loss_sum += loss_val * n_valid
            valid_sum += n_valid
            on = batch.mask > 0
            epoch_y.append(np.asarray(y_hat.data[on], dtype=np.float64))
            epoch_lab.append(np.asarray(batch.labels[on], dtype=np.float64))

        train_loss = loss_sum / valid_sum
        train_report = compute_metrics(np.concatenate(epoch_y), np.concatenate(epoch_lab))
        rows.append(_epoch_row(epoch, "train", train_loss, train_report))

        val_loss = None
        val_report = None
        if val_windows:
            preds = predict_windows(params, model_config, val_windows, bundle, train_config.batch_size)
            val_loss = bce_value(preds.y_hat, preds.labels)
            val_report = compute_metrics(preds.y_hat, preds.labels)
            rows.append(_epoch_row(epoch, "val", val_loss, val_report))
            score = val_report.auc if val_report.auc is not None else val_report.acc_micro
            if score > best_score:
                best_score = score
                best_epoch = epoch
                best_arrays = _snapshot(params)
        history.append(EpochRecord(epoch, train_loss, train_report, val_loss, val_report))

    if not val_windows and train_config.epochs > 0:
        # nothing to select on: the final state doubles as the best state
        best_epoch = train_config.epochs
        best_arrays = _snapshot(params)

    result = TrainResult(
        params=params,
        config=model_config,
        profile=profile,
        vocabs=vocabs,
        history=history,
        best_epoch=best_epoch,
        best_arrays=best_arrays,
        run_dir=Path(run_dir) if run_dir is not None else None,
        seed=train_config.seed,
    )

    if run_dir is not None:
        out = Path(run_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "epochs.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(LOG_HEADER + "\n")
            for row in rows:
                fh.write(row + "\n")
        save_checkpoint(out / "last.ckpt", params, model_config, profile,
                        train_config.seed, train_config.epochs)
        save_checkpoint(out / "best.ckpt", result.best_model(), model_config, profile,
                        train_config.seed, best_epoch)
    return result
