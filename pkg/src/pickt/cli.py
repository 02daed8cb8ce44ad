"""Command-line entry point: config files, run directories, experiment dispatch.

Config files are plain ``key=value`` lines with ``#`` comments. Unknown keys
are rejected so a typo cannot silently fall back to a default. ``--set``
overrides win over file values; every run directory receives the fully
resolved config, and re-running from that file reproduces the outputs
bit for bit (single-threaded).

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure (non-finite loss, failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .data.loader import load_dataset
from .data.schema import build_vocabs
from .data.splits import HOLDOUT_82, HOLDOUT_811, KFOLD_5, MODES, SplitPlan, split
from .data.synth import synth_generate
from .errors import ConfigError, DataError, NumericalError, ParameterError, PicktError
from .metrics import compute_metrics
from .model import ModelConfig, VocabProfile, load_model
from .numeric import Rng

CONFIG_SCHEMA = {
    "dataset.dir": str,
    "model.max_seq_len": int,
    "model.layers": int,
    "model.heads": int,
    "model.d_hidden": int,
    "model.d_intermediate": int,
    "model.dropout": float,
    "model.han": bool,
    "han.in_dim": int,
    "han.hidden_dim": int,
    "han.heads": int,
    "train.epochs": int,
    "train.batch_size": int,
    "train.lr": float,
    "train.seed": int,
    "split.mode": str,
    "embeddings.path": str,
}

DEFAULTS = {
    "dataset.dir": "",
    "model.max_seq_len": 256,
    "model.layers": 4,
    "model.heads": 8,
    "model.d_hidden": 512,
    "model.d_intermediate": 512,
    "model.dropout": 0.1,
    "model.han": True,
    "han.in_dim": 64,
    "han.hidden_dim": 128,
    "han.heads": 4,
    "train.epochs": 5,
    "train.batch_size": 128,
    "train.lr": 3e-4,
    "train.seed": 0,
    "split.mode": HOLDOUT_82,
    "embeddings.path": "",
}

# bare "seed" is accepted as shorthand for the canonical key
_ALIASES = {"seed": "train.seed"}

_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _coerce(key: str, raw: str, where: str):
    key = _ALIASES.get(key, key)
    if key not in CONFIG_SCHEMA:
        raise ConfigError(f"{where}: unknown config key {key!r}")
    kind = CONFIG_SCHEMA[key]
    try:
        if kind is bool:
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(raw)
            return key, _BOOL_WORDS[raw.lower()]
        return key, kind(raw)
    except ValueError:
        raise ConfigError(f"{where}: bad value {raw!r} for {key} (expected {kind.__name__})") from None


def parse_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {body!r}")
        raw_key, raw_value = body.split("=", 1)
        key, value = _coerce(raw_key.strip(), raw_value.strip(), f"{path}:{lineno}")
        out[key] = value
    return out


def resolve_config(config_path, overrides, seed_flag=None) -> dict:
    cfg = dict(DEFAULTS)
    if config_path:
        cfg.update(parse_config_file(config_path))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        raw_key, raw_value = item.split("=", 1)
        key, value = _coerce(raw_key.strip(), raw_value.strip(), "--set")
        cfg[key] = value
    if seed_flag is not None:
        cfg["train.seed"] = seed_flag
    if cfg["split.mode"] not in MODES:
        raise ConfigError(f"split.mode must be one of {MODES}, got {cfg['split.mode']!r}")
    return cfg


def render_config(cfg: dict) -> str:
    lines = []
    for key in sorted(CONFIG_SCHEMA):
        value = cfg[key]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)  # shortest round-trip form
        else:
            text = str(value)
        lines.append(f"{key}={text}")
    return "\n".join(lines) + "\n"


def model_config_from(cfg: dict) -> ModelConfig:
    return ModelConfig(
        layers=cfg["model.layers"],
        heads=cfg["model.heads"],
        d_hidden=cfg["model.d_hidden"],
        d_intermediate=cfg["model.d_intermediate"],
        dropout=cfg["model.dropout"],
        max_seq_len=cfg["model.max_seq_len"],
        han=cfg["model.han"],
        han_in_dim=cfg["han.in_dim"],
        han_hidden_dim=cfg["han.hidden_dim"],
        han_heads=cfg["han.heads"],
    )


def train_config_from(cfg: dict):
    from .train import TrainConfig

    return TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        lr=cfg["train.lr"],
        seed=cfg["train.seed"],
    )


def make_run_dir(base, subcommand: str, seed: int) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    root = Path(base)
    candidate = root / f"{subcommand}-{stamp}-seed{seed}"
    i = 1
    while candidate.exists():
        candidate = root / f"{subcommand}-{stamp}-seed{seed}-{i}"
        i += 1
    candidate.mkdir(parents=True)
    return candidate


def _threads() -> int:
    raw = os.environ.get("PICKT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"PICKT_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"PICKT_THREADS must be >= 1, got {n}")
    return n


def _dataset(cfg: dict):
    if not cfg["dataset.dir"]:
        raise ConfigError("dataset.dir is required for this subcommand")
    return load_dataset(cfg["dataset.dir"])


def _embeddings_dir(cfg: dict):
    return cfg["embeddings.path"] or None


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ------------------------------------------------------------- subcommands


def _cmd_train(cfg: dict, args, run_dir: Path) -> int:
    from .train import prepare_graph, train_model

    dataset = _dataset(cfg)
    model_config = model_config_from(cfg)
    train_config = train_config_from(cfg)
    mode = cfg["split.mode"]
    if mode == KFOLD_5:
        raise ConfigError("split.mode=kfold-5 belongs to the kfold subcommand")
    by_student = dataset.by_student()
    (fold,) = split(sorted(by_student), SplitPlan(mode, train_config.seed))
    val_group = "val" if mode == HOLDOUT_811 else "eval"
    train_records = [r for s in fold["train"] for r in by_student[s]]
    val_records = [r for s in fold[val_group] for r in by_student[s]]
    bundle = prepare_graph(dataset, model_config, _embeddings_dir(cfg))
    result = train_model(
        dataset, train_records, val_records, model_config, train_config,
        bundle=bundle, run_dir=run_dir,
    )
    last = result.history[-1] if result.history else None
    _write_json(run_dir / "report.json", {
        "best_epoch": result.best_epoch,
        "epochs": train_config.epochs,
        "train_students": len(fold["train"]),
        "val_students": len(fold[val_group]),
        "final_val": last.val_report.to_dict() if last and last.val_report else None,
        "best_val": (
            result.history[result.best_epoch - 1].val_report.to_dict()
            if result.best_epoch >= 1 else None
        ),
    })
    print(f"train: {train_config.epochs} epochs, best epoch {result.best_epoch}, outputs in {run_dir}")
    return 0


def _cmd_eval(cfg: dict, args, run_dir: Path) -> int:
    from .evaluate import stratify_by_achievement
    from .train import build_windows, predict_windows, prepare_graph

    dataset = _dataset(cfg)
    params, config, profile, meta = load_model(args.checkpoint, Rng(0))
    vocabs = build_vocabs(dataset.questions, dataset.concepts)
    if VocabProfile.from_vocabs(vocabs) != profile:
        raise DataError(
            "checkpoint vocabulary profile does not match the dataset tables",
            file=str(args.checkpoint),
        )
    bundle = prepare_graph(dataset, config, _embeddings_dir(cfg))
    windows = build_windows(dataset.interactions, dataset, vocabs, config, bundle)
    preds = predict_windows(params, config, windows, bundle)
    report = compute_metrics(preds.y_hat, preds.labels)
    bands, notes = stratify_by_achievement(preds)
    _write_json(run_dir / "report.json", {
        "checkpoint": str(args.checkpoint),
        "dataset": cfg["dataset.dir"],
        "n_predictions": len(preds),
        "overall": report.to_dict(),
        "strata": [
            {"band": b.name, "n_students": b.n_students, "report": b.report.to_dict()}
            for b in bands
        ],
        "notes": notes,
    })
    print(f"eval: {len(preds)} predictions, acc_micro {report.acc_micro:.4f}, "
          f"auc {report.auc if report.auc is None else round(report.auc, 4)}, report in {run_dir}")
    return 0


def _cmd_kfold(cfg: dict, args, run_dir: Path) -> int:
    from .evaluate import kfold_evaluate

    dataset = _dataset(cfg)
    outcome = kfold_evaluate(
        dataset, model_config_from(cfg), train_config_from(cfg),
        k=args.k, run_dir=run_dir, threads=_threads(),
        embeddings_dir=_embeddings_dir(cfg),
    )
    _write_json(run_dir / "report.json", outcome.to_dict())
    summary = ", ".join(f"{k}={v}" for k, v in sorted(outcome.aggregate.items()))
    print(f"kfold: {len(outcome.folds)} folds, {summary}, report in {run_dir}")
    return 0


def _read_id_file(path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise DataError("missing id file", file=str(path))
    return [line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


def _cmd_coldstart(cfg: dict, args, run_dir: Path) -> int:
    from .evaluate import coldstart_new_question, coldstart_new_student

    dataset = _dataset(cfg)
    model_config = model_config_from(cfg)
    train_config = train_config_from(cfg)
    if args.scenario == "new-question":
        outcome = coldstart_new_question(
            dataset, model_config, train_config,
            holdout_fraction=args.fraction, split_seed=train_config.seed,
            embeddings_dir=_embeddings_dir(cfg), run_dir=run_dir / "training",
        )
        _write_json(run_dir / "report.json", {
            "scenario": "new-question",
            "held_question_ids": outcome.held_question_ids,
            "report": outcome.report.to_dict(),
            "per_question_mean": outcome.per_question_mean,
            "cross_question_std": outcome.cross_question_std,
        })
        print(f"coldstart new-question: {len(outcome.held_question_ids)} held questions, "
              f"{outcome.report.n_total} scored positions, report in {run_dir}")
    else:
        if args.diag_file:
            diag = _read_id_file(args.diag_file)
        else:
            qids = sorted(dataset.questions)
            diag = qids[: max(1, len(qids) // 5)]  # default diagnostic: first fifth
        outcome = coldstart_new_student(
            dataset, model_config, train_config, diag_questions=diag,
            split_seed=train_config.seed,
            embeddings_dir=_embeddings_dir(cfg), run_dir=run_dir / "training",
        )
        _write_json(run_dir / "report.json", {
            "scenario": "new-student",
            "diag_questions": sorted(diag),
            "diag_concepts": sorted(outcome.diag_concepts),
            "eval_students": list(outcome.eval_students),
            "n_diag_positions": outcome.n_diag_positions,
            "n_follow_positions": outcome.n_follow_positions,
            "reports": {name: r.to_dict() for name, r in outcome.reports.items()},
        })
        print(f"coldstart new-student: {len(outcome.eval_students)} held students, "
              f"{outcome.n_follow_positions} follow-up positions, report in {run_dir}")
    return 0


def _cmd_synth(cfg: dict, args, run_dir: Path) -> int:
    out = synth_generate(
        args.students, args.questions, args.concepts,
        seed=cfg["train.seed"], out_dir=args.out,
        interactions_per_student=(args.min_interactions, args.max_interactions),
    )
    summary = load_dataset(out).summary()
    _write_json(run_dir / "report.json", {"dataset": str(out), **summary})
    print(f"synth: wrote {summary['interactions']} interactions for "
          f"{summary['students']} students to {out}")
    return 0


def _cmd_embed_pca(cfg: dict, args, run_dir: Path) -> int:
    from .embeddings import read_table, reduce_to_width, write_table

    in_dir = Path(args.in_dir) if args.in_dir else None
    if in_dir is None:
        if not cfg["embeddings.path"]:
            raise ConfigError("embed-pca needs --in-dir or embeddings.path")
        in_dir = Path(cfg["embeddings.path"])
    width = args.width or cfg["han.in_dim"]
    q_table = read_table(in_dir / "q_text.emb")
    c_table = read_table(in_dir / "c_text.emb")
    pca, (q_red, c_red) = reduce_to_width([q_table, c_table], width)
    write_table(q_red, run_dir / "q_text.emb")
    write_table(c_red, run_dir / "c_text.emb")
    payload = {
        "input_width": q_table.d,
        "output_width": width,
        "questions": q_red.n,
        "concepts": c_red.n,
        "explained_variance_ratio_sum": (
            None if pca is None else float(pca.explained_variance_ratio.sum())
        ),
    }
    _write_json(run_dir / "report.json", payload)
    print(f"embed-pca: {q_table.d} -> {width} dims for {q_red.n}+{c_red.n} rows, tables in {run_dir}")
    return 0


def _cmd_gradcheck(cfg: dict, args, run_dir: Path) -> int:
    from .diagnostics import GRAD_TOL, gradient_suite

    results = gradient_suite()
    rows = []
    failed = []
    for name, errs in results.items():
        ok = errs["__max__"] < GRAD_TOL
        rows.append({"op": name, "max_rel_err": errs["__max__"], "tol": GRAD_TOL, "ok": ok})
        if not ok:
            failed.append(name)
        print(f"{name:24s} {errs['__max__']:12.3e} {'ok' if ok else 'FAIL'}")
    _write_json(run_dir / "report.json", {"cases": rows, "failed": failed})
    if failed:
        raise NumericalError(f"gradient check failed for: {', '.join(failed)}")
    print(f"gradcheck: {len(rows)} cases under {GRAD_TOL:.0e}, report in {run_dir}")
    return 0


def _cmd_bench(cfg: dict, args, run_dir: Path) -> int:
    from .evaluate import measure_inference
    from .train import build_windows, prepare_graph

    dataset = _dataset(cfg)
    params, config, profile, meta = load_model(args.checkpoint, Rng(0))
    vocabs = build_vocabs(dataset.questions, dataset.concepts)
    if VocabProfile.from_vocabs(vocabs) != profile:
        raise DataError(
            "checkpoint vocabulary profile does not match the dataset tables",
            file=str(args.checkpoint),
        )
    bundle = prepare_graph(dataset, config, _embeddings_dir(cfg))
    windows = build_windows(dataset.interactions, dataset, vocabs, config, bundle)
    cost = measure_inference(params, config, windows, bundle, batch_size=64)
    payload = {
        "seconds": cost.seconds,
        "rss_delta_kb": cost.rss_delta_kb,
        "param_count": cost.param_count,
        "n_predictions": cost.n_predictions,
    }
    _write_json(run_dir / "report.json", payload)
    print(f"bench: {cost.n_predictions} predictions in {cost.seconds:.3f}s, "
          f"{cost.param_count} parameters, report in {run_dir}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "kfold": _cmd_kfold,
    "coldstart": _cmd_coldstart,
    "synth": _cmd_synth,
    "embed-pca": _cmd_embed_pca,
    "gradcheck": _cmd_gradcheck,
    "bench": _cmd_bench,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems map to exit 1, not argparse's 2
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pickt", description="Knowledge-tracing experiments")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser, required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable; wins over the file)")
        p.add_argument("--seed", type=int, default=None, help="shorthand for train.seed")
        p.add_argument("--out-dir", default="runs", help="parent directory for run outputs")

    common(sub.add_parser("train", help="fit a model on a holdout split"))
    p_eval = sub.add_parser("eval", help="score a checkpoint on a dataset")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_kfold = sub.add_parser("kfold", help="cross-validated training")
    common(p_kfold)
    p_kfold.add_argument("--k", type=int, default=5, choices=(1, 5))
    p_cold = sub.add_parser("coldstart", help="new-question / new-student scenarios")
    common(p_cold)
    p_cold.add_argument("--scenario", required=True, choices=("new-question", "new-student"))
    p_cold.add_argument("--fraction", type=float, default=0.2,
                        help="question holdout fraction (new-question)")
    p_cold.add_argument("--diag-file", help="file of diagnostic question ids (new-student)")
    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p_synth)
    p_synth.add_argument("--students", type=int, default=20)
    p_synth.add_argument("--questions", type=int, default=30)
    p_synth.add_argument("--concepts", type=int, default=5)
    p_synth.add_argument("--min-interactions", type=int, default=40)
    p_synth.add_argument("--max-interactions", type=int, default=60)
    p_synth.add_argument("--out", required=True, help="dataset output directory")
    p_pca = sub.add_parser("embed-pca", help="reduce text-embedding tables to a width")
    common(p_pca)
    p_pca.add_argument("--in-dir", help="directory holding q_text.emb / c_text.emb")
    p_pca.add_argument("--width", type=int, default=None)
    common(sub.add_parser("gradcheck", help="verify gradients of every op"))
    p_bench = sub.add_parser("bench", help="measure inference time and memory")
    common(p_bench)
    p_bench.add_argument("--checkpoint", required=True)
    return parser


def run(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = resolve_config(args.config, args.overrides, args.seed)
    run_dir = make_run_dir(args.out_dir, args.subcommand, cfg["train.seed"])
    (run_dir / "resolved.cfg").write_text(render_config(cfg), encoding="utf-8")
    return _COMMANDS[args.subcommand](cfg, args, run_dir)


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except PicktError as exc:  # remaining package errors are data-shaped
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
