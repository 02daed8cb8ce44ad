"""Per-class accuracies, tied-rank AUC, and fold aggregation.

A class with no samples gets None instead of a silent zero: macro averages
over skewed slices would otherwise look meaningful while being garbage.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import ParameterError

METRIC_FIELDS = ("acc_wrong", "acc_correct", "acc_macro", "acc_micro", "auc")


@dataclass(frozen=True)
class EvalReport:
    n_wrong: int
    n_correct: int
    acc_wrong: float | None
    acc_correct: float | None
    acc_macro: float | None
    acc_micro: float | None
    auc: float | None

    @property
    def n_total(self) -> int:
        return self.n_wrong + self.n_correct

    def to_dict(self) -> dict:
        return {
            "n_wrong": self.n_wrong,
            "n_correct": self.n_correct,
            "acc_wrong": self.acc_wrong,
            "acc_correct": self.acc_correct,
            "acc_macro": self.acc_macro,
            "acc_micro": self.acc_micro,
            "auc": self.auc,
        }


def empty_report() -> EvalReport:
    return EvalReport(0, 0, None, None, None, None, None)


def compute_metrics(y_hat, labels, threshold: float = 0.5) -> EvalReport:
    """Threshold accuracies per class plus Mann-Whitney AUC (ties count 0.5)."""
    y = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    lab = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape != lab.shape:
        raise ParameterError(f"{y.shape[0]} predictions for {lab.shape[0]} labels")
    if y.size == 0:
        raise ParameterError("compute_metrics needs at least one sample")
    if not np.all((lab == 0.0) | (lab == 1.0)):
        raise ParameterError("labels must be 0 or 1")
    correct = lab == 1.0
    predicted_hi = y >= threshold
    n1 = int(correct.sum())
    n0 = y.size - n1
    acc_wrong = float((~predicted_hi[~correct]).mean()) if n0 else None
    acc_correct = float(predicted_hi[correct].mean()) if n1 else None
    acc_macro = (acc_wrong + acc_correct) / 2.0 if n0 and n1 else None
    acc_micro = float((predicted_hi == correct).mean())
    auc = None
    if n0 and n1:
        ranks = rankdata(y, method="average")
        auc = float((ranks[correct].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))
    return EvalReport(n0, n1, acc_wrong, acc_correct, acc_macro, acc_micro, auc)


def mean_std(values) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; one value has spread 0."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ParameterError("mean_std needs at least one value")
    spread = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), spread


def format_mean_std(values, digits: int = 4) -> str:
    m, s = mean_std(values)
    return f"{m:.{digits}f}±{s:.{digits}f}"


def aggregate_reports(reports) -> dict[str, str]:
    """Per-metric "mean±std" over folds, skipping undefined entries."""
    out = {}
    for name in METRIC_FIELDS:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        out[name] = format_mean_std(values) if values else "undefined"
    return out


def metric_str(value: float | None) -> str:
    return "nan" if value is None else f"{value:.6f}"
