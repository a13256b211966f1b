#!/usr/bin/env python3
"""
Tests for ROC/AUC, threshold decisions and top-k ranking
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utils.errors import ParameterError
from utils.evaluation import (
    LabeledScores,
    auc_table,
    mann_whitney_auc,
    roc_curve,
    threshold_decide,
    threshold_decisions,
    top_k_outliers,
    trapezoid_auc,
    write_auc_table,
    write_roc,
)


def pairwise_auc(scores, labels):
    """Brute-force P(outlier > normal) + 0.5 P(tie) over all pairs"""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


labeled_lists = st.integers(min_value=2, max_value=40).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(min_value=-5, max_value=5).map(float), min_size=n, max_size=n),
        st.lists(st.integers(min_value=0, max_value=1), min_size=n, max_size=n),
    )
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


def test_labeled_scores_validation():
    with pytest.raises(ParameterError):
        LabeledScores([0.1, 0.2], [0])
    with pytest.raises(ParameterError):
        LabeledScores([], [])
    with pytest.raises(ParameterError):
        LabeledScores([0.1, np.nan], [0, 1])
    with pytest.raises(ParameterError):
        LabeledScores([0.1, 0.2], [0, 2])


def test_auc_examples():
    assert roc_curve(LabeledScores([0, 1, 2, 3], [0, 0, 1, 1])).auc == 1.0
    assert roc_curve(LabeledScores([0.3] * 6, [0, 1, 0, 1, 1, 0])).auc == 0.5
    assert roc_curve(LabeledScores([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0])).auc == 0.75


def test_roc_needs_both_classes():
    with pytest.raises(ParameterError):
        roc_curve(LabeledScores([0.1, 0.2], [1, 1]))
    with pytest.raises(ParameterError):
        roc_curve(LabeledScores([0.1, 0.2], [0, 0]))


def test_roc_points_and_endpoints():
    curve = roc_curve(LabeledScores([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0]))
    assert curve.points() == [
        (np.inf, 0.0, 0.0),
        (0.9, 0.0, 0.5),
        (0.5, 0.5, 0.5),
        (0.4, 0.5, 1.0),
        (0.1, 1.0, 1.0),
    ]


def test_tied_scores_move_together():
    curve = roc_curve(LabeledScores([0.5, 0.5, 0.2], [1, 0, 0]))
    assert curve.thresholds.tolist() == [np.inf, 0.5, 0.2]
    assert curve.tpr.tolist() == [0.0, 1.0, 1.0]
    assert curve.fpr.tolist() == [0.0, 0.5, 1.0]
    assert curve.auc == 0.75


@settings(max_examples=200, deadline=None)
@given(labeled_lists)
def test_auc_matches_pairwise_count(data):
    scores, labels = data
    ls = LabeledScores(scores, labels)
    curve = roc_curve(ls)
    expected = pairwise_auc(scores, labels)
    assert curve.auc == pytest.approx(expected, abs=1e-12)
    assert trapezoid_auc(curve) == pytest.approx(expected, abs=1e-12)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
    assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(labeled_lists)
def test_label_swap_mirrors_auc(data):
    scores, labels = data
    auc = mann_whitney_auc(LabeledScores(scores, labels))
    swapped = mann_whitney_auc(LabeledScores(scores, [1 - l for l in labels]))
    assert swapped == pytest.approx(1.0 - auc, abs=1e-12)


def test_monotone_transform_keeps_auc(rng):
    scores = rng.standard_normal(300)
    labels = (rng.uniform(size=300) < 0.3).astype(int)
    base = roc_curve(LabeledScores(scores, labels)).auc
    assert roc_curve(LabeledScores(np.exp(scores), labels)).auc == base
    assert roc_curve(LabeledScores(3.0 * scores + 7.0, labels)).auc == base


def test_threshold_decide():
    assert threshold_decide(0.3, 0.5) == 1
    assert threshold_decide(0.7, 0.5) == 0
    assert threshold_decide(0.5, 0.5) == 1
    with pytest.raises(ParameterError):
        threshold_decide(np.inf, 0.5)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_raising_threshold_never_flips_normal_to_outlier(score, theta, raise_by):
    if threshold_decide(score, theta) == 1:
        assert threshold_decide(score, theta + raise_by) == 1


def test_threshold_decisions_vectorized():
    assert threshold_decisions([0.1, 0.5, 0.9], 0.5).tolist() == [1, 1, 0]


def test_top_k_outliers():
    assert top_k_outliers([3, 1, 2], ["a", "b", "c"], 2) == ["a", "c"]
    assert top_k_outliers([3, 1, 2], ["a", "b", "c"], 3) == ["a", "c", "b"]
    assert top_k_outliers([0.2, 0.9, 0.9, 0.1], ["w", "x", "y", "z"], 1) == ["x"]
    assert top_k_outliers([0.2, 0.9, 0.9, 0.1], ["w", "x", "y", "z"], 2) == ["x", "y"]
    with pytest.raises(ParameterError):
        top_k_outliers([1, 2], ["a", "b"], 3)
    with pytest.raises(ParameterError):
        top_k_outliers([1, 2], ["a"], 1)


def test_write_roc_format(tmp_path):
    curve = roc_curve(LabeledScores([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0]))
    path = write_roc(tmp_path / "roc.csv", curve, echo={"kind": "lcp"})
    lines = path.read_text().splitlines()
    assert lines[0] == "# kind: lcp"
    assert lines[1] == "threshold,fpr,tpr"
    assert lines[2] == "inf,0.0,0.0"
    assert lines[3] == "0.9,0.0,0.5"
    assert lines[-1] == "# auc=0.75"
    assert len(lines) == 2 + 5 + 1


def test_write_roc_thresholds_round_trip_exactly(tmp_path):
    scores = [0.1 + 0.2, 1.0 / 3.0, 2.0 / 7.0]
    path = write_roc(tmp_path / "roc.csv", roc_curve(LabeledScores(scores, [1, 0, 1])))
    rows = [l.split(",") for l in path.read_text().splitlines()[2:-1]]
    assert [r[0] for r in rows] == ["0.3333333333333333", "0.30000000000000004", "0.2857142857142857"]
    assert [float(r[0]) for r in rows] == sorted(scores, reverse=True)


def test_auc_table(tmp_path):
    results = {
        "noise": {"knn": LabeledScores([0, 1, 2, 3], [0, 0, 1, 1]),
                  "kd": LabeledScores([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0])},
    }
    table = auc_table(results)
    assert table == {"noise": {"knn": 1.0, "kd": 0.75}}
    path = write_auc_table(tmp_path / "auc.csv", table, ["kd", "knn"])
    assert path.read_text().splitlines() == ["outliers,kd,knn", "noise,0.75,1.0"]
