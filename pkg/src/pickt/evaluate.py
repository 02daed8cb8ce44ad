"""Evaluation harnesses: k-fold, achievement strata, cold start, inference cost.

Cold-start isolation is enforced, not assumed: held-out interaction rows are
wrapped in an access-logging view before training starts, and a non-empty
log afterwards raises LeakageError instead of reporting optimistic numbers.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .data.loader import Dataset, LoggedRecords
from .data.schema import build_vocabs
from .data.splits import HOLDOUT_82, KFOLD_5, SplitPlan, split
from .data.windows import SequenceWindow
from .errors import LeakageError, ParameterError
from .metrics import (
    EvalReport,
    aggregate_reports,
    compute_metrics,
    empty_report,
    mean_std,
)
from .model import ModelConfig
from .model.params import ModelParams
from .numeric import Rng
from .train import (
    GraphBundle,
    Predictions,
    TrainConfig,
    TrainResult,
    build_windows,
    feature_encoder,
    predict_windows,
    prepare_graph,
    train_model,
)

__all__ = [
    "AchievementBand",
    "FoldOutcome",
    "InferenceCost",
    "KfoldOutcome",
    "NewQuestionOutcome",
    "NewStudentOutcome",
    "coldstart_new_question",
    "coldstart_new_student",
    "kfold_evaluate",
    "measure_inference",
    "stratify_by_achievement",
]


# ---------------------------------------------------------------- k-fold


@dataclass
class FoldOutcome:
    fold: int
    train_students: tuple[str, ...]
    eval_students: tuple[str, ...]
    report: EvalReport | None  # validation report of the best epoch
    best_epoch: int
    result: TrainResult


@dataclass
class KfoldOutcome:
    folds: list[FoldOutcome]
    aggregate: dict[str, str]  # metric -> "mean±std" over folds

    def to_dict(self) -> dict:
        return {
            "folds": [
                {
                    "fold": f.fold,
                    "n_train_students": len(f.train_students),
                    "n_eval_students": len(f.eval_students),
                    "best_epoch": f.best_epoch,
                    "report": f.report.to_dict() if f.report else None,
                }
                for f in self.folds
            ],
            "aggregate": self.aggregate,
        }


def _run_fold(args) -> FoldOutcome:
    i, fold, dataset, by_student, model_config, train_config, vocabs, bundle, run_dir = args
    train_records = [r for sid in fold["train"] for r in by_student[sid]]
    eval_records = [r for sid in fold["eval"] for r in by_student[sid]]
    fold_dir = None if run_dir is None else f"{run_dir}/fold-{i}"
    result = train_model(
        dataset,
        train_records,
        eval_records,
        model_config,
        replace(train_config, seed=train_config.seed + i),
        vocabs=vocabs,
        bundle=bundle,
        run_dir=fold_dir,
    )
    report = None
    if result.best_epoch >= 1 and result.history:
        report = result.history[result.best_epoch - 1].val_report
    return FoldOutcome(
        fold=i,
        train_students=fold["train"],
        eval_students=fold["eval"],
        report=report,
        best_epoch=result.best_epoch,
        result=result,
    )


def kfold_evaluate(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    k: int = 5,
    run_dir=None,
    threads: int = 1,
    embeddings_dir=None,
) -> KfoldOutcome:
    """Student-partitioned cross-validation; k=1 degrades to one 80/20 holdout."""
    if k == 5:
        plan = SplitPlan(KFOLD_5, train_config.seed)
    elif k == 1:
        plan = SplitPlan(HOLDOUT_82, train_config.seed)
    else:
        raise ParameterError(f"k must be 1 or 5, got {k}")
    by_student = dataset.by_student()
    folds = split(sorted(by_student), plan)
    vocabs = build_vocabs(dataset.questions, dataset.concepts)
    bundle = prepare_graph(dataset, model_config, embeddings_dir)
    jobs = [
        (i, fold, dataset, by_student, model_config, train_config, vocabs, bundle, run_dir)
        for i, fold in enumerate(folds)
    ]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_run_fold, jobs))
    else:
        outcomes = [_run_fold(job) for job in jobs]
    reports = [o.report for o in outcomes if o.report is not None]
    aggregate = aggregate_reports(reports) if reports else {}
    return KfoldOutcome(folds=outcomes, aggregate=aggregate)


# ------------------------------------------------- achievement stratification

# right-closed achievement bands on the per-student correct rate
ACHIEVEMENT_BANDS = (
    ("lowest", 0.40),
    ("low", 0.60),
    ("middle", 0.80),
    ("high", 0.90),
    ("highest", 1.01),
)


def achievement_band(rate: float) -> str:
    for name, upper in ACHIEVEMENT_BANDS:
        if rate <= upper:
            return name
    return ACHIEVEMENT_BANDS[-1][0]


@dataclass
class AchievementBand:
    name: str
    n_students: int
    report: EvalReport


def stratify_by_achievement(predictions: Predictions) -> tuple[list[AchievementBand], list[str]]:
    """Split predictions by the owning student's observed correct rate.

    Returns the non-empty bands in low-to-high order plus notes naming the
    omitted empty bands.
    """
    if len(predictions) == 0:
        return [], [f"band {name} empty (no predictions)" for name, _ in ACHIEVEMENT_BANDS]
    sids = np.asarray(predictions.student_ids)
    rates = {}
    for sid in dict.fromkeys(predictions.student_ids):
        rates[sid] = float(predictions.labels[sids == sid].mean())
    bands: list[AchievementBand] = []
    notes: list[str] = []
    for name, _ in ACHIEVEMENT_BANDS:
        members = sorted(s for s, r in rates.items() if achievement_band(r) == name)
        if not members:
            notes.append(f"band {name} empty (0 students)")
            continue
        keep = np.isin(sids, members)
        sub = predictions.subset(keep)
        bands.append(AchievementBand(name, len(members), compute_metrics(sub.y_hat, sub.labels)))
    return bands, notes


# ----------------------------------------------------------- new questions


@dataclass
class NewQuestionOutcome:
    held_question_ids: list[str]
    report: EvalReport
    per_question_mean: dict[str, float]
    cross_question_std: float
    result: TrainResult
    predictions: Predictions
    held_flags: np.ndarray


def coldstart_new_question(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    holdout_fraction: float = 0.2,
    split_seed: int = 0,
    id_unk_rate: float = 0.2,
    embeddings_dir=None,
    run_dir=None,
) -> NewQuestionOutcome:
    """Hold out a question subset entirely, then score it sight unseen.

    Held questions never enter the id vocabulary (they fall back to UNK at
    inference) while their text and knowledge-map features stay live; their
    interaction rows are access-logged to prove training never read them.
    Training rehearses the unseen-id regime by masking id_unk_rate of the
    visible positions' question ids to UNK, which is what teaches the model
    to lean on the text/graph pathway when the id carries nothing.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ParameterError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    train_config = replace(train_config, id_unk_rate=id_unk_rate)
    qids = sorted(dataset.questions)
    if len(qids) < 2:
        raise ParameterError("new-question cold start needs at least 2 questions")
    order = Rng(split_seed).child(11).permutation(len(qids))
    n_held = max(1, int(round(len(qids) * holdout_fraction)))
    if n_held >= len(qids):
        n_held = len(qids) - 1
    held = {qids[i] for i in order[:n_held]}

    visible_questions = {qid: meta for qid, meta in dataset.questions.items() if qid not in held}
    vocabs = build_vocabs(visible_questions, dataset.concepts)
    for qid in held:
        if qid in vocabs.question:
            raise LeakageError(f"held-out question {qid!r} is present in the training vocabulary")

    visible_rows = [r for r in dataset.interactions if r.question_id not in held]
    held_rows = LoggedRecords([r for r in dataset.interactions if r.question_id in held])
    if not visible_rows:
        raise ParameterError("every interaction row belongs to a held-out question")

    # features come from the full metadata tables: legal, ids do not leak
    bundle = prepare_graph(dataset, model_config, embeddings_dir)
    result = train_model(
        dataset, visible_rows, [], model_config, train_config,
        vocabs=vocabs, bundle=bundle, run_dir=run_dir,
    )
    if held_rows.log.students or held_rows.log.questions:
        raise LeakageError(
            f"training touched {len(held_rows.log.questions)} held-out questions"
        )

    eval_records = visible_rows + list(held_rows)  # logged reads, after training
    windows = build_windows(eval_records, dataset, vocabs, model_config, bundle)
    preds = predict_windows(result.params, model_config, windows, bundle, train_config.batch_size)
    flags = np.asarray([qid in held for qid in preds.question_ids], dtype=bool)
    if flags.any():
        sub = preds.subset(flags)
        report = compute_metrics(sub.y_hat, sub.labels)
        per_question: dict[str, list[float]] = {}
        for qid, y in zip(sub.question_ids, sub.y_hat):
            per_question.setdefault(qid, []).append(float(y))
        means = {qid: float(np.mean(v)) for qid, v in sorted(per_question.items())}
        std = mean_std(list(means.values()))[1] if len(means) > 1 else 0.0
    else:
        report = empty_report()
        means = {}
        std = 0.0
    return NewQuestionOutcome(
        held_question_ids=sorted(held),
        report=report,
        per_question_mean=means,
        cross_question_std=std,
        result=result,
        predictions=preds,
        held_flags=flags,
    )


# ------------------------------------------------------------ new students


@dataclass
class NewStudentOutcome:
    eval_students: tuple[str, ...]
    diag_concepts: frozenset[str]
    reports: dict[str, EvalReport]  # not-included / included / overall
    n_diag_positions: int
    n_follow_positions: int
    result: TrainResult
    predictions: Predictions
    follow_flags: np.ndarray
    included_flags: np.ndarray


def coldstart_new_student(
    dataset: Dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    diag_questions,
    split_seed: int = 0,
    embeddings_dir=None,
    run_dir=None,
) -> NewStudentOutcome:
    """Score unseen students conditioned only on a diagnostic prefix.

    Each held-out student's rows on the diagnostic questions are moved to the
    front of their sequence; metrics cover only the follow-up positions. A
    follow-up question counts as "included" when every concept it links to
    appears among the diagnostic questions' concepts.
    """
    diag_set = set(diag_questions)
    if not diag_set:
        raise ParameterError("diag_questions must not be empty")
    unknown = sorted(q for q in diag_set if q not in dataset.questions)
    if unknown:
        raise ParameterError(f"diagnostic questions missing from the dataset: {unknown[:4]}")

    by_student = dataset.by_student()
    plan = SplitPlan(HOLDOUT_82, split_seed)
    (fold,) = split(sorted(by_student), plan)
    train_students, eval_students = fold["train"], fold["eval"]

    eval_logged = {sid: LoggedRecords(by_student[sid]) for sid in eval_students}
    train_records = [r for sid in train_students for r in by_student[sid]]

    vocabs = build_vocabs(dataset.questions, dataset.concepts)
    bundle = prepare_graph(dataset, model_config, embeddings_dir)
    result = train_model(
        dataset, train_records, [], model_config, train_config,
        vocabs=vocabs, bundle=bundle, run_dir=run_dir,
    )
    touched = [sid for sid, logged in eval_logged.items() if logged.log.students or logged.log.questions]
    if touched:
        raise LeakageError(f"training touched held-out students {sorted(touched)[:4]}")

    diag_concepts = frozenset(
        c for q in diag_set for c in dataset.questions[q].linked_concepts
    )

    def included(qid: str) -> bool:
        meta = dataset.questions.get(qid)
        if meta is None:
            return False
        # all-of quantifier: a question with no linked concepts is included
        return all(c in diag_concepts for c in meta.linked_concepts)

    encoder = feature_encoder(dataset, vocabs, bundle)
    max_len = model_config.max_seq_len
    windows: list[SequenceWindow] = []
    follow_flags: list[bool] = []
    n_diag_total = 0
    n_follow_total = 0
    for sid in eval_students:
        rows = list(eval_logged[sid])
        diag_rows = [r for r in rows if r.question_id in diag_set]
        follow_rows = [r for r in rows if r.question_id not in diag_set]
        seq = diag_rows + follow_rows
        n_diag = len(diag_rows)
        n_diag_total += n_diag
        n_follow_total += len(follow_rows)
        if not seq:
            continue
        # the prefix ordering is deliberate, so windows are chunked by hand
        for start in range(0, len(seq), max_len):
            chunk = seq[start : start + max_len]
            windows.append(encoder.encode_window(chunk, max_len))
            follow_flags.extend(start + t >= n_diag for t in range(len(chunk)))

    if windows:
        preds = predict_windows(result.params, model_config, windows, bundle, train_config.batch_size)
    else:
        preds = Predictions(
            y_hat=np.zeros(0), labels=np.zeros(0), student_ids=[], question_ids=[], records=[],
        )
    follow = np.asarray(follow_flags, dtype=bool)
    inc = np.asarray([included(qid) for qid in preds.question_ids], dtype=bool)

    def slice_report(mask: np.ndarray) -> EvalReport:
        if not mask.any():
            return empty_report()
        sub = preds.subset(mask)
        return compute_metrics(sub.y_hat, sub.labels)

    reports = {
        "not-included": slice_report(follow & ~inc),
        "included": slice_report(follow & inc),
        "overall": slice_report(follow),
    }
    return NewStudentOutcome(
        eval_students=eval_students,
        diag_concepts=diag_concepts,
        reports=reports,
        n_diag_positions=n_diag_total,
        n_follow_positions=n_follow_total,
        result=result,
        predictions=preds,
        follow_flags=follow,
        included_flags=inc,
    )


# --------------------------------------------------------- inference cost


@dataclass
class InferenceCost:
    seconds: float
    rss_delta_kb: int
    param_count: int
    n_predictions: int


def measure_inference(
    params: ModelParams,
    config: ModelConfig,
    windows: list[SequenceWindow],
    bundle: GraphBundle | None = None,
    batch_size: int = 64,
) -> InferenceCost:
    """Wall time and peak-RSS growth of one inference sweep."""
    import resource

    before = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    t0 = time.perf_counter()
    preds = (
        predict_windows(params, config, windows, bundle, batch_size)
        if windows
        else Predictions(np.zeros(0), np.zeros(0), [], [], [])
    )
    elapsed = time.perf_counter() - t0
    after = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    return InferenceCost(
        seconds=elapsed,
        rss_delta_kb=max(0, int(after - before)),
        param_count=params.param_count(),
        n_predictions=len(preds),
    )
