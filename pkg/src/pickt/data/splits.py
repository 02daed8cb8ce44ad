"""Student-level dataset splitting: holdout ratios and k-fold."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..numeric import Rng

HOLDOUT_811 = "holdout-8-1-1"
HOLDOUT_82 = "holdout-8-2"
KFOLD_5 = "kfold-5"

MODES = (HOLDOUT_811, HOLDOUT_82, KFOLD_5)


@dataclass(frozen=True)
class SplitPlan:
    mode: str
    seed: int


def split(students, plan: SplitPlan) -> list[dict[str, tuple[str, ...]]]:
    """Partition students into folds.

    Returns a list of folds; each fold maps group name to a student tuple.
    holdout-8-1-1 -> one fold {train, val, test}; holdout-8-2 -> one fold
    {train, eval}; kfold-5 -> five folds {train, eval}. Same seed, same
    student set -> identical assignment.
    """
    if plan.mode not in MODES:
        raise ParameterError(f"unknown split mode {plan.mode!r}; expected one of {MODES}")
    students = sorted(set(students))
    n = len(students)
    order = Rng(plan.seed).child(71).permutation(n)
    shuffled = [students[i] for i in order]

    if plan.mode == HOLDOUT_811:
        if n < 3:
            raise ParameterError(f"holdout-8-1-1 needs at least 3 students, got {n}")
        n_test = max(1, n // 10)
        n_val = max(1, n // 10)
        test = tuple(shuffled[:n_test])
        val = tuple(shuffled[n_test : n_test + n_val])
        train = tuple(shuffled[n_test + n_val :])
        return [{"train": train, "val": val, "test": test}]

    if plan.mode == HOLDOUT_82:
        if n < 2:
            raise ParameterError(f"holdout-8-2 needs at least 2 students, got {n}")
        n_eval = max(1, n // 5)
        return [{"train": tuple(shuffled[n_eval:]), "eval": tuple(shuffled[:n_eval])}]

    if n < 5:
        raise ParameterError(f"kfold-5 needs at least 5 students, got {n}")
    parts = np.array_split(np.arange(n), 5)
    folds = []
    for k in range(5):
        eval_idx = set(parts[k].tolist())
        folds.append(
            {
                "train": tuple(shuffled[i] for i in range(n) if i not in eval_idx),
                "eval": tuple(shuffled[i] for i in sorted(eval_idx)),
            }
        )
    return folds
