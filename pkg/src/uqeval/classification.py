"""AUROC, ROC curves, thresholded confusion counts, F1 and threshold selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UndefinedMetricError(ValueError):
    """The metric needs both positive and negative labels."""


def _inputs(p, y) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y).ravel().astype(np.int64)
    if p.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    return p, y


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # Start index of each run of equal values.
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], xs.size]
    run_rank = (starts + ends + 1) / 2.0  # mean of positions start+1 .. end
    ranks = np.empty(x.size, dtype=np.float64)
    ranks[order] = np.repeat(run_rank, ends - starts)
    return ranks


def auroc(p, y) -> float:
    """Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie)."""
    p, y = _inputs(p, y)
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC is undefined when labels contain a single class")
    u = midranks(p)[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # first point uses +inf (nothing predicted positive)

    def area(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))


def roc_curve(p, y) -> RocCurve:
    """Operating points for "positive iff score >= t" over unique scores, descending."""
    p, y = _inputs(p, y)
    n_pos = int((y == 1).sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC curve is undefined when labels contain a single class")
    order = np.argsort(-p, kind="mergesort")
    ps, ys = p[order], y[order]
    last = np.r_[ps[1:] != ps[:-1], True]  # last index of each tie run
    tp = np.cumsum(ys)[last]
    fp = np.cumsum(1 - ys)[last]
    return RocCurve(
        fpr=np.r_[0.0, fp / n_neg],
        tpr=np.r_[0.0, tp / n_pos],
        thresholds=np.r_[np.inf, ps[last]],
    )


def confusion_at(p, y, threshold: float) -> tuple[int, int, int, int]:
    """(tp, fp, tn, fn) with a positive prediction iff p > threshold."""
    p, y = _inputs(p, y)
    pred = p > threshold
    truth = y == 1
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    return tp, fp, y.size - tp - fp - fn, fn


def f1_score(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


@dataclass(frozen=True)
class ThresholdChoice:
    class_index: int
    threshold: float
    f1: float


def candidate_thresholds(p) -> np.ndarray:
    """0, 1 and the midpoints between consecutive distinct scores, ascending."""
    u = np.unique(np.asarray(p, dtype=np.float64))
    return np.unique(np.r_[0.0, (u[:-1] + u[1:]) / 2.0, 1.0])


def f1_at_thresholds(p, y, thresholds) -> np.ndarray:
    """F1 of "p > t" for every t, via one sort instead of one pass per threshold."""
    p, y = _inputs(p, y)
    t = np.asarray(thresholds, dtype=np.float64)
    order = np.argsort(p, kind="mergesort")
    ps = p[order]
    pos_sorted = (y[order] == 1).astype(np.int64)
    # Positives with score <= t are predicted negative.
    below = np.searchsorted(ps, t, side="right")
    cum_pos = np.r_[0, np.cumsum(pos_sorted)]
    n_pos = cum_pos[-1]
    fn = cum_pos[below]
    tp = n_pos - fn
    fp = (p.size - below) - tp
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def select_threshold(p_val, y_val, class_index: int = 0) -> ThresholdChoice:
    """Threshold maximising validation F1; ties go to the smallest threshold."""
    p, y = _inputs(p_val, y_val)
    if not (y == 1).any():
        raise UndefinedMetricError("threshold selection needs at least one positive label")
    cands = candidate_thresholds(p)
    scores = f1_at_thresholds(p, y, cands)
    best = int(np.argmax(scores))  # first maximum == smallest threshold
    return ThresholdChoice(class_index, float(cands[best]), float(scores[best]))
