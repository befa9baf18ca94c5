"""Dense training loss: focal classification over every grid point plus
smooth-L1 distance and angle regression gated to positives.

total = lambda/N * sum(focal) + 1/N_pos * sum(smooth_l1 over distances)
      + 1/N_pos * sum(smooth_l1 over angles)

N counts all points across levels, N_pos the positives; with no positives
the regression terms are defined as zero.  Reductions run left-to-right
over the flattened row-major point order, so results are bit-stable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import POSITIVE, AssignmentResult

__all__ = [
    "LossConfig",
    "LossBreakdown",
    "ClmLevelBatch",
    "focal_loss",
    "smooth_l1",
    "clm_loss",
    "PROB_EPS",
]

PROB_EPS = 1e-6


@dataclass(frozen=True)
class LossConfig:
    lam: float = 1.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    smooth_l1_beta: float = 1.0

    def __post_init__(self):
        for name in ("lam", "focal_gamma", "focal_alpha", "smooth_l1_beta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")


@dataclass(frozen=True)
class LossBreakdown:
    """Raw per-term sums plus the normalized total.

    ctr / dist / angle are unnormalized sums, so
    total = lam/n_points * ctr + dist/n_pos + angle/n_pos.
    """

    ctr: float
    dist: float
    angle: float
    total: float
    n_points: int
    n_pos: int


def _focal_arrays(p: np.ndarray, y: np.ndarray, gamma: float, alpha_f: float):
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    pos = y == 1
    val = np.where(
        pos,
        -alpha_f * (1.0 - p) ** gamma * np.log(p),
        -(1.0 - alpha_f) * p**gamma * np.log(1.0 - p),
    )
    grad = np.where(
        pos,
        alpha_f * (gamma * (1.0 - p) ** (gamma - 1.0) * np.log(p) - (1.0 - p) ** gamma / p),
        (1.0 - alpha_f) * (p**gamma / (1.0 - p) - gamma * p ** (gamma - 1.0) * np.log(1.0 - p)),
    )
    return val, grad


def focal_loss(
    p: float, y: int, gamma: float = 2.0, alpha_f: float = 0.25
) -> tuple[float, float]:
    """Focal loss value and d(value)/dp for one probability.

    y = 1: -alpha_f (1-p)^gamma log p;  y = 0: -(1-alpha_f) p^gamma log(1-p).
    p is clamped into [eps, 1-eps] before evaluation.
    """
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    val, grad = _focal_arrays(np.asarray([p], dtype=np.float64), np.asarray([y]), gamma, alpha_f)
    return float(val[0]), float(grad[0])


def _smooth_l1_arrays(d: np.ndarray, beta: float):
    ad = np.abs(d)
    val = np.where(ad < beta, d * d / (2.0 * beta), ad - beta / 2.0)
    grad = np.where(ad < beta, d / beta, np.sign(d))
    return val, grad


def smooth_l1(x: float, t: float, beta: float = 1.0) -> tuple[float, float]:
    """Smooth-L1 value and gradient wrt x; quadratic inside |x-t| < beta,
    linear outside, C1 at the transition."""
    if not (math.isfinite(x) and math.isfinite(t)):
        raise ValueError(f"non-finite smooth_l1 inputs x={x}, t={t}")
    val, grad = _smooth_l1_arrays(np.asarray([x - t], dtype=np.float64), beta)
    return float(val[0]), float(grad[0])


@dataclass(frozen=True)
class ClmLevelBatch:
    """One level's predictions, labels, and targets, all row-major.

    scores: (n,) probabilities;  dist_preds/dist_targets: (n, 4) normalized;
    angle_preds/angle_targets: (n,).  Targets may be NaN at non-positive
    points; a NaN target at a positive point is an error.
    """

    scores: np.ndarray
    dist_preds: np.ndarray
    angle_preds: np.ndarray
    assign: AssignmentResult
    dist_targets: np.ndarray
    angle_targets: np.ndarray


def clm_loss(levels: Sequence[ClmLevelBatch], cfg: LossConfig) -> LossBreakdown:
    """Aggregate the dense loss over pyramid levels.

    Classification sums focal over every point; distance and angle terms sum
    smooth-L1 over positives only and are divided by the positive count.
    """
    ctr = 0.0
    dist = 0.0
    angle = 0.0
    n_points = 0
    n_pos = 0
    for batch in levels:
        scores = np.asarray(batch.scores, dtype=np.float64).ravel()
        n = scores.size
        labels = np.asarray(batch.assign.labels).ravel()
        if labels.size != n:
            raise ValueError(f"labels size {labels.size} != scores size {n}")
        y = (labels == POSITIVE).astype(np.int64)
        val, _ = _focal_arrays(scores, y, cfg.focal_gamma, cfg.focal_alpha)
        ctr += float(np.sum(val))
        n_points += n

        pos = np.flatnonzero(labels == POSITIVE)
        n_pos += pos.size
        if pos.size == 0:
            continue
        dp = np.asarray(batch.dist_preds, dtype=np.float64).reshape(n, 4)[pos]
        dt = np.asarray(batch.dist_targets, dtype=np.float64).reshape(n, 4)[pos]
        ap = np.asarray(batch.angle_preds, dtype=np.float64).ravel()[pos]
        at = np.asarray(batch.angle_targets, dtype=np.float64).ravel()[pos]
        if not (np.all(np.isfinite(dt)) and np.all(np.isfinite(at))):
            raise ValueError("missing (non-finite) regression target at a positive point")
        dval, _ = _smooth_l1_arrays(dp - dt, cfg.smooth_l1_beta)
        aval, _ = _smooth_l1_arrays(ap - at, cfg.smooth_l1_beta)
        dist += float(np.sum(dval))
        angle += float(np.sum(aval))
    if n_points == 0:
        raise ValueError("no points given")
    total = cfg.lam / n_points * ctr
    if n_pos > 0:
        total += dist / n_pos + angle / n_pos
    return LossBreakdown(
        ctr=ctr, dist=dist, angle=angle, total=total, n_points=n_points, n_pos=n_pos
    )
