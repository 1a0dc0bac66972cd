"""Multi-label loss kernels with analytic gradients, plus a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp

FOCAL_EPS = 1e-7


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 1.0
    gamma: float = 2.0

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0:
            raise ValueError("focal alpha and gamma must be non-negative")


def _check(logits, y) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(logits, dtype=np.float64).ravel()
    y = np.asarray(y).ravel()
    if s.shape != y.shape:
        raise ValueError("logits and labels differ in length")
    if not np.isfinite(s).all():
        raise ValueError("logits must be finite")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(bool)


def focal_loss(logits, y, params: FocalParams = FocalParams()) -> tuple[float, np.ndarray]:
    """Mean over classes of -alpha (1 - p_t)^gamma ln p_t.

    p_t is sigmoid(s) for positives and sigmoid(-s) for negatives, clamped to
    [eps, 1 - eps]; the gradient is zero where the clamp is active.
    """
    s, pos = _check(logits, y)
    if s.size == 0:
        return 0.0, np.zeros(0)
    sign = np.where(pos, 1.0, -1.0)
    pt_raw = expit(sign * s)
    pt = np.clip(pt_raw, FOCAL_EPS, 1.0 - FOCAL_EPS)
    a, g = params.alpha, params.gamma
    one_minus = 1.0 - pt
    loss = -a * one_minus**g * np.log(pt)
    # d/ds of the per-class term, using dp_t/ds = sign * p_t (1 - p_t).
    grad = -a * sign * (one_minus ** (g + 1) - g * one_minus**g * pt * np.log(pt))
    grad = np.where(pt_raw == pt, grad, 0.0)
    k = s.size
    return float(loss.mean()), grad / k


def zlpr_loss(logits, y) -> tuple[float, np.ndarray]:
    """ln(1 + sum_pos e^-s) + ln(1 + sum_neg e^s), log-sum-exp stabilised."""
    s, pos = _check(logits, y)
    grad = np.zeros_like(s)
    total = 0.0
    for mask, z, sign in ((pos, -s[pos], -1.0), (~pos, s[~pos], 1.0)):
        if z.size == 0:
            continue
        lse = logsumexp(np.r_[0.0, z])
        total += lse
        grad[mask] = sign * np.exp(z - lse)
    return float(total), grad


def finite_diff_gradient(
    loss_fn: Callable, logits, y, h: float = 1e-5, **kwargs
) -> np.ndarray:
    """Central differences of ``loss_fn(logits, y)[0]`` along each coordinate."""
    if h <= 0:
        raise ValueError("step must be positive")
    s = np.asarray(logits, dtype=np.float64).ravel()
    out = np.empty_like(s)
    for k in range(s.size):
        up, dn = s.copy(), s.copy()
        up[k] += h
        dn[k] -= h
        out[k] = (loss_fn(up, y, **kwargs)[0] - loss_fn(dn, y, **kwargs)[0]) / (2.0 * h)
    return out


def relative_error(a, b, floor: float = 1e-8) -> float:
    """||a - b|| / max(||a||, ||b||, floor) over the whole gradient vector.

    The floor covers gradients far below finite-difference resolution (around
    1e-11 for h=1e-5), where both sides are numerically zero.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def fd_noise(loss_value: float, h: float) -> float:
    """Round-off bound of a central difference: eps * max(|f|, 1) / h."""
    return float(np.finfo(np.float64).eps * max(abs(loss_value), 1.0) / h)


@dataclass(frozen=True)
class GradientCheck:
    name: str
    points: int
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def gradient_check(
    points: int = 1000,
    seed: int = 0,
    max_abs_logit: float = 30.0,
    h: float = 1e-5,
    tolerance: float = 1e-4,
    focal_params: FocalParams | None = None,
) -> list[GradientCheck]:
    """Compare analytic and central-difference gradients at random points.

    With ``focal_params`` every point uses those focal parameters; otherwise
    even points use alpha=1, gamma=2 and odd points random (alpha, gamma). A 1e-4 relative tolerance cannot be resolved
    on gradients smaller than 1e4 times the difference round-off, so the error
    denominator is floored at ``fd_noise / tolerance``.
    """
    from .rng import SplitMix64

    g = SplitMix64(seed)
    worst = {"focal": 0.0, "zlpr": 0.0}
    for i in range(points):
        k = 1 + g.below(14)
        s = (g.uniform(k) * 2.0 - 1.0) * max_abs_logit
        y = (g.uniform(k) < 0.5).astype(int)
        if focal_params is not None:
            params = focal_params
        elif i % 2 == 0:
            params = FocalParams()
        else:
            a, gm = g.uniform(2)
            params = FocalParams(alpha=0.25 + 1.75 * a, gamma=4.0 * gm)
        for name, fn, kw in (("focal", focal_loss, {"params": params}), ("zlpr", zlpr_loss, {})):
            value, grad = fn(s, y, **kw)
            fd = finite_diff_gradient(fn, s, y, h, **kw)
            err = relative_error(grad, fd, floor=fd_noise(value, h) / tolerance)
            worst[name] = max(worst[name], err)
    return [GradientCheck(name, points, err, tolerance) for name, err in worst.items()]
