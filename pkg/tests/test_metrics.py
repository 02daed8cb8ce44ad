"""Metric correctness against independent counting oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pickt.errors import ParameterError
from pickt.metrics import (
    EvalReport,
    aggregate_reports,
    compute_metrics,
    empty_report,
    format_mean_std,
    mean_std,
    metric_str,
)


def pairwise_auc(y, labels):
    """O(n^2) oracle: fraction of (correct, wrong) pairs ranked right, ties 0.5."""
    y = np.asarray(y, dtype=np.float64)
    labels = np.asarray(labels)
    pos = y[labels == 1]
    neg = y[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def counted_accuracies(y, labels, threshold=0.5):
    """Loop-based per-class accuracy oracle."""
    hit0 = n0 = hit1 = n1 = 0
    for p, lab in zip(y, labels):
        if lab == 0:
            n0 += 1
            hit0 += p < threshold
        else:
            n1 += 1
            hit1 += p >= threshold
    return (
        hit0 / n0 if n0 else None,
        hit1 / n1 if n1 else None,
        (hit0 + hit1) / (n0 + n1),
    )


def test_auc_equals_pairwise_counting_exactly():
    # 200 vectors spanning sizes up to 2000, roughly half quantized to force
    # heavy ties; rank-formula AUC must match pair counting bit for bit
    rng = np.random.default_rng(20240817)
    sizes = rng.integers(2, 2001, size=200)
    for i, n in enumerate(sizes):
        y = rng.random(n)
        if i % 2 == 0:
            y = np.round(y, 2)
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1  # keep both classes present
        report = compute_metrics(y, labels)
        assert report.auc == pairwise_auc(y, labels)


def test_auc_known_values():
    assert compute_metrics([0.1, 0.9], [0, 1]).auc == 1.0
    assert compute_metrics([0.9, 0.1], [0, 1]).auc == 0.0
    assert compute_metrics([0.5, 0.5], [0, 1]).auc == 0.5
    # pos {0.5, 0.8} vs neg {0.2, 0.5}: three wins, one tie
    assert compute_metrics([0.2, 0.5, 0.5, 0.8], [0, 0, 1, 1]).auc == 0.875


def test_accuracy_split_by_class():
    report = compute_metrics([0.3, 0.7, 0.6, 0.2], [0, 1, 0, 0])
    assert report.acc_wrong == pytest.approx(2 / 3)
    assert report.acc_correct == 1.0
    assert report.acc_macro == pytest.approx((2 / 3 + 1.0) / 2)
    assert report.acc_micro == 0.75
    assert report.n_wrong == 3 and report.n_correct == 1 and report.n_total == 4


def test_threshold_boundary_counts_as_correct_prediction():
    assert compute_metrics([0.5], [1]).acc_correct == 1.0
    assert compute_metrics([0.5], [0]).acc_wrong == 0.0


def test_single_class_leaves_markers_undefined():
    ones = compute_metrics([0.6, 0.8], [1, 1])
    assert ones.acc_wrong is None and ones.acc_macro is None and ones.auc is None
    assert ones.acc_correct == 1.0 and ones.acc_micro == 1.0
    zeros = compute_metrics([0.6, 0.2], [0, 0])
    assert zeros.acc_correct is None and zeros.acc_macro is None and zeros.auc is None
    assert zeros.acc_wrong == 0.5 and zeros.acc_micro == 0.5


def test_input_validation():
    with pytest.raises(ParameterError):
        compute_metrics([0.5, 0.5], [1])
    with pytest.raises(ParameterError):
        compute_metrics([], [])
    with pytest.raises(ParameterError):
        compute_metrics([0.5], [2])
    with pytest.raises(ParameterError):
        compute_metrics([0.5], [0.5])


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(0.0, 1.0), st.integers(0, 1)),
        min_size=1,
        max_size=60,
    )
)
def test_metrics_match_counting_oracle(pairs):
    y = [p for p, _ in pairs]
    labels = [lab for _, lab in pairs]
    report = compute_metrics(y, labels)
    acc_wrong, acc_correct, acc_micro = counted_accuracies(y, labels)
    assert report.acc_wrong == acc_wrong
    assert report.acc_correct == acc_correct
    assert report.acc_micro == acc_micro
    if acc_wrong is None or acc_correct is None:
        assert report.acc_macro is None
        assert report.auc is None
    else:
        # the macro average is the exact mean of the two class accuracies
        assert report.acc_macro == (acc_wrong + acc_correct) / 2
        assert report.auc == pairwise_auc(y, labels)


def test_mean_std_sample_convention():
    m, s = mean_std([2.0])
    assert (m, s) == (2.0, 0.0)
    m, s = mean_std([1.0, 3.0])
    assert m == 2.0
    assert s == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ParameterError):
        mean_std([])


def test_format_mean_std():
    assert format_mean_std([1.0, 3.0]) == "2.0000±1.4142"
    assert format_mean_std([0.5]) == "0.5000±0.0000"


def test_aggregate_reports_skips_undefined():
    full = compute_metrics([0.2, 0.8], [0, 1])
    partial = compute_metrics([0.6, 0.8], [1, 1])
    agg = aggregate_reports([full, partial])
    assert agg["acc_correct"] == "1.0000±0.0000"
    assert agg["auc"] == "1.0000±0.0000"  # only the defined report contributes
    none_agg = aggregate_reports([partial])
    assert none_agg["acc_wrong"] == "undefined"


def test_metric_str_formats():
    assert metric_str(None) == "nan"
    assert metric_str(0.5) == "0.500000"
    assert metric_str(1 / 3) == "0.333333"


def test_empty_report():
    report = empty_report()
    assert report.n_total == 0
    assert report.auc is None and report.acc_micro is None
    assert isinstance(report, EvalReport)
    assert report.to_dict()["n_wrong"] == 0
