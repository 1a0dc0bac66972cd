"""Ensemble averaging, entropy-based uncertainty decomposition and consensus heatmaps.

All entropies are per-class Bernoulli entropies in nats. For every
(sample, class) cell:

    TU = H(mean_m p_m)          total
    AU = mean_m H(p_m)          aleatoric
    EU = TU - AU                epistemic (member disagreement)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .store import PredictionTensor, ValidationError, _readonly


def _member_mean(v: np.ndarray) -> np.ndarray:
    """Mean over the last axis as first + mean of deviations from it.

    Exact whenever all members agree (plain sum / M is not), with a fixed
    member-order reduction.
    """
    first = v[..., 0]
    dev = np.zeros(v.shape[:-1], dtype=np.float64)
    for m in range(1, v.shape[-1]):
        dev += v[..., m] - first
    return first + dev / v.shape[-1]


def ensemble_mean(t: PredictionTensor) -> np.ndarray:
    """Uniform average over members, shape (N, K)."""
    return np.clip(_member_mean(t.values), 0.0, 1.0)


def _entropy(p: np.ndarray) -> np.ndarray:
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(p > 0.0, -p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
        b = np.where(q > 0.0, -q * np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    return a + b


def binary_entropy(p):
    """-p ln p - (1-p) ln(1-p) with 0 ln 0 = 0. Accepts scalars or arrays."""
    arr = np.asarray(p, dtype=np.float64)
    if not ((arr >= 0.0) & (arr <= 1.0)).all():
        raise ValueError("binary_entropy needs probabilities in [0, 1]")
    out = _entropy(arr)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class UncertaintyRecord:
    """Per-(sample, class) uncertainty in nats; ``eu`` is stored as ``tu - au``."""

    tu: np.ndarray
    au: np.ndarray
    eu: np.ndarray

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tu.shape


def decompose_uncertainty(t: PredictionTensor) -> UncertaintyRecord:
    v = t.values
    tu = _entropy(ensemble_mean(t))
    au = _member_mean(_entropy(v))
    eu = tu - au
    return UncertaintyRecord(_readonly(tu), _readonly(au), _readonly(eu))


def summed_total_uncertainty(records: UncertaintyRecord) -> np.ndarray:
    """Per-sample TU summed over classes. Not used in reports."""
    return records.tu.sum(axis=1)


@dataclass(frozen=True)
class UncertaintySummary:
    per_class: np.ndarray  # (K, 3): columns tu, au, eu
    overall: tuple[float, float, float]


def mean_uncertainty_summary(
    records: UncertaintyRecord, positives_mask: np.ndarray | None = None
) -> UncertaintySummary:
    """Per-class means over samples, then the mean of those over classes.

    With ``positives_mask`` (N, K) only masked cells enter each class mean; a
    class with no masked cells gets NaN and is skipped in the overall mean.
    """
    if records.tu.size == 0:
        raise ValueError("cannot summarise an empty uncertainty record")
    stack = np.stack([records.tu, records.au, records.eu], axis=-1)  # (N, K, 3)
    if positives_mask is None:
        per_class = stack.mean(axis=0)
    else:
        mask = np.asarray(positives_mask, dtype=bool)
        if mask.shape != records.tu.shape:
            raise ValueError("positives mask shape does not match the records")
        counts = mask.sum(axis=0)
        sums = np.where(mask[..., None], stack, 0.0).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            per_class = sums / counts[:, None]
    valid = ~np.isnan(per_class[:, 0])
    if not valid.any():
        raise ValueError("no cells selected for the uncertainty summary")
    overall = per_class[valid].mean(axis=0)
    return UncertaintySummary(per_class, tuple(float(x) for x in overall))


# --------------------------------------------------------------------------- heatmaps


def validate_heatmaps(stack: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    maps = [np.asarray(m, dtype=np.float64) for m in stack]
    if not maps:
        raise ValidationError("heatmap stack is empty")
    shape = maps[0].shape
    if len(shape) != 2:
        raise ValidationError(f"heatmaps must be 2-D, got shape {shape}")
    for i, m in enumerate(maps):
        if m.shape != shape:
            raise ValidationError(f"heatmap {i} has shape {m.shape}, expected {shape}")
        if not ((m >= 0.0) & (m <= 1.0)).all():
            raise ValidationError(f"heatmap {i} has values outside [0,1]")
    return np.stack(maps)


def average_heatmaps(stack) -> np.ndarray:
    """Per-pixel member mean, before renormalisation."""
    return validate_heatmaps(stack).mean(axis=0)


def consensus_heatmap(stack, ensemble_prob: float, gate: float = 0.5) -> np.ndarray | None:
    """Mean map min-max scaled to [0, 1], or None unless ``ensemble_prob > gate``."""
    if not 0.0 <= gate <= 1.0:
        raise ValueError("gate must lie in [0, 1]")
    mean = average_heatmaps(stack)
    if not ensemble_prob > gate:
        return None
    lo, hi = mean.min(), mean.max()
    if hi == lo:
        return np.zeros_like(mean)
    return (mean - lo) / (hi - lo)


def read_matrix_text(path: str | Path) -> np.ndarray:
    """Whitespace- or comma-separated rows of decimals."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(x) for x in line.replace(",", " ").split()])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: rows are empty or ragged")
    return np.array(rows, dtype=np.float64)


def heatmaps_from_tensor(t: PredictionTensor, height: int, width: int) -> np.ndarray:
    """K=1 tensor whose N = height*width rows are row-major pixels; members are maps."""
    if t.n_classes != 1 or t.n_samples != height * width:
        raise ValidationError("heatmap tensor must have K=1 and N = height * width")
    return np.moveaxis(t.values[:, 0, :].reshape(height, width, t.n_members), 2, 0)
