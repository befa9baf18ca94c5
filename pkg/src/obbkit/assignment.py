"""Dense positive/negative labeling without anchors.

Ground truths are first routed to one pyramid level by their size, then
grid points whose local coordinates fall strictly inside the shrunken
central region of a ground truth become positives.  Candidate boxes (the
refinement stage) are labeled by max rotated IoU instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import OrientedBox, iou_matrix

__all__ = [
    "LEVELS",
    "POSITIVE",
    "NEGATIVE",
    "IGNORE",
    "FeatureGridSpec",
    "AssignerConfig",
    "AssignmentResult",
    "UnassignableSizeError",
    "grid_points",
    "assign_level",
    "assign_points",
    "assign_by_iou",
]

LEVELS = (2, 3, 4, 5, 6)

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1

_SQRT2 = math.sqrt(2.0)


class UnassignableSizeError(ValueError):
    """Ground-truth size outside every level's interval."""


@dataclass(frozen=True)
class FeatureGridSpec:
    """One pyramid level: stride in pixels per cell, grid shape, and the
    distance normalizer used by the log coder."""

    level: int
    stride: int
    height: int
    width: int
    normalizer: float

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"level must be in {LEVELS}, got {self.level}")
        if self.stride != 4 * 2 ** (self.level - 2):
            raise ValueError(f"level {self.level} requires stride {4 * 2 ** (self.level - 2)}, got {self.stride}")
        if self.normalizer != 4 * self.stride:
            raise ValueError(f"level {self.level} requires normalizer {4 * self.stride}, got {self.normalizer}")
        if self.height < 1 or self.width < 1:
            raise ValueError(f"grid shape must be positive, got {self.height}x{self.width}")

    @classmethod
    def for_level(cls, level: int, height: int, width: int) -> "FeatureGridSpec":
        stride = 4 * 2 ** (level - 2)
        return cls(level=level, stride=stride, height=height, width=width, normalizer=4 * stride)

    @classmethod
    def pyramid(cls, image_size: int) -> tuple["FeatureGridSpec", ...]:
        """Specs for all five levels covering a square image (ceil division)."""
        out = []
        for level in LEVELS:
            stride = 4 * 2 ** (level - 2)
            cells = max(1, -(-image_size // stride))
            out.append(cls.for_level(level, cells, cells))
        return tuple(out)

    @property
    def n_points(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class AssignerConfig:
    """Size routing and central-region parameters.

    alpha scales the per-level size intervals; sigma is the central rate
    shrinking each ground truth to its positive region.  The floor/ceiling
    open up the first and last interval so every size in range lands
    somewhere.
    """

    alpha: float = 8.0
    sigma: float = 0.2
    min_size_floor: float = 0.0
    max_size_ceiling: float = 100000.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not (0.0 < self.sigma <= 1.0):
            raise ValueError(f"sigma must be in (0, 1], got {self.sigma}")

    def scale_interval(self, level_pos: int, n_levels: int, stride: int) -> tuple[float, float]:
        """Half-open [lo, hi) of sqrt(w*h) scales routed to this level."""
        lo = self.alpha * stride / _SQRT2
        hi = _SQRT2 * self.alpha * stride
        if level_pos == 0:
            lo = self.min_size_floor
        if level_pos == n_levels - 1:
            hi = self.max_size_ceiling
        return lo, hi


@dataclass(frozen=True)
class AssignmentResult:
    """Per-point (or per-candidate) ternary labels plus matched gt indices.

    labels: int8 array of POSITIVE / NEGATIVE / IGNORE.
    matched_gt: int64 array, gt index where positive, -1 elsewhere.
    level: pyramid level for grid assignments, None for IoU assignments.
    """

    labels: np.ndarray
    matched_gt: np.ndarray
    level: int | None = None

    def __post_init__(self):
        if self.labels.shape != self.matched_gt.shape:
            raise ValueError("labels and matched_gt shapes differ")
        pos = self.labels == POSITIVE
        if not np.all((self.matched_gt >= 0) == pos):
            raise ValueError("matched_gt must be set exactly on positive entries")

    @property
    def n_pos(self) -> int:
        return int(np.count_nonzero(self.labels == POSITIVE))

    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.labels == POSITIVE)


def grid_points(grid: FeatureGridSpec) -> np.ndarray:
    """Image-plane projections of the grid cells, row-major (H*W, 2).

    Cell (row, col) projects to the cell center
    ((col + 1/2) * stride, (row + 1/2) * stride).
    """
    s = float(grid.stride)
    xs = (np.arange(grid.width) + 0.5) * s
    ys = (np.arange(grid.height) + 0.5) * s
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def assign_level(gt: OrientedBox, cfg: AssignerConfig, levels: Sequence[FeatureGridSpec]) -> int:
    """Index into `levels` of the unique level whose size interval holds the
    gt scale sqrt(w*h).  Intervals tile contiguously, so membership is
    unique; a scale at or above the ceiling raises."""
    scale = math.sqrt(gt.w * gt.h)
    n = len(levels)
    for pos, spec in enumerate(levels):
        lo, hi = cfg.scale_interval(pos, n, spec.stride)
        if lo <= scale < hi:
            return pos
    raise UnassignableSizeError(
        f"gt scale {scale:.2f} outside [{cfg.min_size_floor}, {cfg.max_size_ceiling})"
    )


def _local_coords(points: np.ndarray, gt: OrientedBox) -> tuple[np.ndarray, np.ndarray]:
    cos = math.cos(gt.theta)
    sin = math.sin(gt.theta)
    dx = points[:, 0] - gt.cx
    dy = points[:, 1] - gt.cy
    return cos * dx - sin * dy, sin * dx + cos * dy


def assign_points(
    grid: FeatureGridSpec,
    gts: Sequence[OrientedBox],
    cfg: AssignerConfig,
) -> AssignmentResult:
    """Label this level's grid points against its ground truths.

    A point is positive iff its local coordinates in some gt satisfy
    |x'| < sigma*w/2 and |y'| < sigma*h/2 (strict); overlapping central
    regions resolve to the smallest-area gt.  Everything else is negative.
    """
    pts = grid_points(grid)
    n = pts.shape[0]
    labels = np.full(n, NEGATIVE, dtype=np.int8)
    matched = np.full(n, -1, dtype=np.int64)
    best_area = np.full(n, np.inf)
    for gi, gt in enumerate(gts):
        xl, yl = _local_coords(pts, gt)
        inside = (np.abs(xl) < cfg.sigma * gt.w / 2.0) & (np.abs(yl) < cfg.sigma * gt.h / 2.0)
        take = inside & (gt.area < best_area)
        labels[take] = POSITIVE
        matched[take] = gi
        best_area[take] = gt.area
    return AssignmentResult(labels=labels, matched_gt=matched, level=grid.level)


def assign_by_iou(
    candidates: Sequence[OrientedBox],
    gts: Sequence[OrientedBox],
    pos_thr: float = 0.7,
    neg_thr: float = 0.3,
) -> AssignmentResult:
    """Label candidates by max rotated IoU over gts: above pos_thr positive
    (matched to the argmax gt), below neg_thr negative, otherwise ignore."""
    if not (0.0 <= neg_thr < pos_thr <= 1.0):
        raise ValueError(f"need 0 <= neg_thr < pos_thr <= 1, got {neg_thr}, {pos_thr}")
    n = len(candidates)
    labels = np.full(n, NEGATIVE, dtype=np.int8)
    matched = np.full(n, -1, dtype=np.int64)
    if n == 0 or len(gts) == 0:
        return AssignmentResult(labels=labels, matched_gt=matched)
    ious = iou_matrix(candidates, gts)
    best = ious.max(axis=1)
    arg = ious.argmax(axis=1)
    pos = best > pos_thr
    ign = (~pos) & (best >= neg_thr)
    labels[pos] = POSITIVE
    labels[ign] = IGNORE
    matched[pos] = arg[pos]
    return AssignmentResult(labels=labels, matched_gt=matched)
