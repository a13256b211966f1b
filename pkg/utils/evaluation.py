#!/usr/bin/env python3
"""
ROC/AUC evaluation, threshold decisions and top-k ranking

Scores follow the "higher = more OOD" orientation; label 1 marks an outlier.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.stats import rankdata

from utils.errors import ParameterError
from utils.files import format_value, write_table


@dataclass(frozen=True)
class LabeledScores:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(self.labels).reshape(-1)
        if scores.size < 1 or scores.size != labels.size:
            raise ParameterError("labels", f"need equal, non-empty lengths, got {scores.size} scores and {labels.size} labels")
        if not np.all(np.isfinite(scores)):
            raise ParameterError("scores", "scores must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise ParameterError("labels", "labels must be 0 (normal) or 1 (outlier)")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n_outliers(self) -> int:
        return int(self.labels.sum())

    @property
    def n_normals(self) -> int:
        return int(self.labels.size - self.labels.sum())


@dataclass(frozen=True)
class RocCurve:
    """(threshold, FPR, TPR) points from the strictest threshold to the loosest"""
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def points(self):
        return list(zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()))


def mann_whitney_auc(ls: LabeledScores) -> float:
    """P(outlier score > normal score) + 0.5 * P(tie), from mid-ranks"""
    n_pos, n_neg = ls.n_outliers, ls.n_normals
    ranks = rankdata(ls.scores, method="average")
    u = ranks[ls.labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(ls: LabeledScores) -> RocCurve:
    """
    Sweep every distinct score from high to low; a row is predicted OOD when
    its score is >= the threshold, so tied scores move together.
    """
    if ls.n_outliers == 0 or ls.n_normals == 0:
        raise ParameterError("labels", "ROC needs at least one outlier (1) and one normal (0) label")
    order = np.argsort(-ls.scores, kind="stable")
    scores = ls.scores[order]
    labels = ls.labels[order]

    # last index of every tie group in descending order
    group_end = np.flatnonzero(np.append(scores[1:] != scores[:-1], True))
    tp = np.cumsum(labels)[group_end]
    fp = np.cumsum(1 - labels)[group_end]

    thresholds = np.concatenate([[np.inf], scores[group_end]])
    tpr = np.concatenate([[0.0], tp / ls.n_outliers])
    fpr = np.concatenate([[0.0], fp / ls.n_normals])
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=mann_whitney_auc(ls))


def trapezoid_auc(curve: RocCurve) -> float:
    """Area under the tie-grouped curve; equals curve.auc"""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def threshold_decide(score: float, theta: float) -> int:
    """1 (normal) when score <= theta, else 0 (outlier)"""
    if not (np.isfinite(score) and np.isfinite(theta)):
        raise ParameterError("score", "score and threshold must be finite")
    return 1 if score <= theta else 0


def threshold_decisions(scores, theta: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    return (scores <= theta).astype(np.int64)


def top_k_outliers(scores: Sequence[float], ids: Sequence[Any], k: int) -> List[Any]:
    """ids of the k highest scores, descending; ties keep the earlier id first"""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size != len(ids):
        raise ParameterError("ids", f"{len(ids)} ids for {scores.size} scores")
    if not 1 <= k <= scores.size:
        raise ParameterError("k", f"must satisfy 1 <= k <= {scores.size}, got {k}")
    order = np.lexsort((np.arange(scores.size), -scores))[:k]
    return [ids[i] for i in order]


def write_roc(path: Union[str, Path], curve: RocCurve, echo: Optional[Dict[str, Any]] = None) -> Path:
    """threshold,fpr,tpr table followed by a '# auc=<value>' line"""
    rows = ((format_value(t), format_value(f), format_value(p)) for t, f, p in curve.points())
    return write_table(path, ["threshold", "fpr", "tpr"], rows, echo, trailer=[f"# auc={format_value(curve.auc)}"])


def auc_table(results: Mapping[str, Mapping[str, LabeledScores]]) -> Dict[str, Dict[str, float]]:
    """AUC for every (outlier set, scorer kind) pair"""
    return {
        outliers: {kind: roc_curve(ls).auc for kind, ls in by_kind.items()}
        for outliers, by_kind in results.items()
    }


def write_auc_table(path: Union[str, Path], table: Mapping[str, Mapping[str, float]], kinds: Sequence[str],
                    echo: Optional[Dict[str, Any]] = None) -> Path:
    rows = ([name] + [format_value(table[name][k]) for k in kinds] for name in table)
    return write_table(path, ["outliers"] + list(kinds), rows, echo)
