"""Reliability bins, ECE, NLL and Brier score for one class at a time."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NLL_EPS = 1e-7


def _inputs(p, y) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("need at least one sample")
    if p.shape != y.shape:
        raise ValueError(f"probabilities ({p.size}) and labels ({y.size}) differ in length")
    return p, y


@dataclass(frozen=True, eq=False)
class ReliabilityBins:
    """Equal-width bins over [0, 1]; empty bins hold NaN confidence/accuracy."""

    lower: np.ndarray
    upper: np.ndarray
    count: np.ndarray
    confidence: np.ndarray
    accuracy: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.count)

    @property
    def total(self) -> int:
        return int(self.count.sum())

    def rows(self):
        for i in range(self.n_bins):
            yield (
                float(self.lower[i]),
                float(self.upper[i]),
                int(self.count[i]),
                float(self.confidence[i]),
                float(self.accuracy[i]),
            )


def bin_index(p: np.ndarray, n_bins: int) -> np.ndarray:
    # floor(p * B), with p == 1 folded into the last bin.
    return np.minimum((np.asarray(p) * n_bins).astype(np.int64), n_bins - 1)


def reliability_bins(p, y, n_bins: int = 10) -> ReliabilityBins:
    p, y = _inputs(p, y)
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    idx = bin_index(p, n_bins)
    count = np.bincount(idx, minlength=n_bins)
    conf_sum = np.bincount(idx, weights=p, minlength=n_bins)
    acc_sum = np.bincount(idx, weights=y, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        conf = np.where(count > 0, conf_sum / count, np.nan)
        acc = np.where(count > 0, acc_sum / count, np.nan)
    edges = np.arange(n_bins + 1, dtype=np.float64) / n_bins
    return ReliabilityBins(edges[:-1], edges[1:], count, conf, acc)


def ece(bins: ReliabilityBins) -> float:
    """Count-weighted mean of |accuracy - confidence| over non-empty bins."""
    full = bins.count > 0
    weights = bins.count[full] / bins.count.sum()
    return float(np.sum(weights * np.abs(bins.accuracy[full] - bins.confidence[full])))


def expected_calibration_error(p, y, n_bins: int = 10) -> float:
    return ece(reliability_bins(p, y, n_bins))


def nll(p, y) -> float:
    p, y = _inputs(p, y)
    pc = np.clip(p, NLL_EPS, 1.0 - NLL_EPS)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log1p(-pc)))


def brier(p, y) -> float:
    p, y = _inputs(p, y)
    return float(np.mean((p - y) ** 2))


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    nll: float
    brier: float


def calibration_report(p, y, n_bins: int = 10) -> CalibrationReport:
    return CalibrationReport(expected_calibration_error(p, y, n_bins), nll(p, y), brier(p, y))
