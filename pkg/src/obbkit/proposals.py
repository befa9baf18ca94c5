"""From dense predictions to a ranked list of oriented proposals.

Per level: decode each surviving grid point's score/distances/angle into a
coarse box, apply the refinement deltas, and average coarse and fine scores.
Levels are pooled, greedy rotated NMS prunes overlaps, and the top-n
survivors are returned.  A seeded scene simulator builds idealized
prediction maps around sampled ground truths for end-to-end checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import (
    AssignerConfig,
    AssignmentResult,
    FeatureGridSpec,
    assign_level,
    assign_points,
    grid_points,
)
from .encoding import DistanceVector, RefineDeltas, decode_box, decode_refine, encode_distances, encode_refine
from .geometry import OrientedBox, Point, _iou_lanes, as_array

__all__ = [
    "PredictionMaps",
    "RefinementMaps",
    "LevelPredictions",
    "Proposal",
    "ProposalConfig",
    "SceneConfig",
    "Scene",
    "rotated_nms",
    "fuse_scores",
    "generate_proposals",
    "simulate_scene",
    "scene_to_dict",
    "scene_from_dict",
]


@dataclass(frozen=True)
class PredictionMaps:
    """Dense per-point outputs of the coarse stage for one level.

    scores: (H, W) in [0, 1]; distances: (H, W, 4) log-normalized l,t,r,b;
    angles: (H, W) radians.
    """

    grid: FeatureGridSpec
    scores: np.ndarray
    distances: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        shape = (self.grid.height, self.grid.width)
        if self.scores.shape != shape or self.angles.shape != shape:
            raise ValueError(f"score/angle maps must be {shape}")
        if self.distances.shape != shape + (4,):
            raise ValueError(f"distance map must be {shape + (4,)}")
        if self.scores.size and (self.scores.min() < 0.0 or self.scores.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")


@dataclass(frozen=True)
class RefinementMaps:
    """Dense refinement outputs: deltas (H, W, 5) as dx,dy,dw,dh,dtheta and
    fine scores (H, W) in [0, 1]."""

    deltas: np.ndarray
    fine_scores: np.ndarray

    def __post_init__(self):
        if self.deltas.shape != self.fine_scores.shape + (5,):
            raise ValueError("deltas must be fine_scores shape + (5,)")
        if self.fine_scores.size and (self.fine_scores.min() < 0.0 or self.fine_scores.max() > 1.0):
            raise ValueError("fine scores must lie in [0, 1]")


@dataclass(frozen=True)
class LevelPredictions:
    coarse: PredictionMaps
    refine: RefinementMaps

    def __post_init__(self):
        if self.refine.fine_scores.shape != self.coarse.scores.shape:
            raise ValueError("coarse and refinement map shapes differ")


@dataclass(frozen=True)
class Proposal:
    box: OrientedBox
    score: float
    level: int

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))


@dataclass(frozen=True)
class ProposalConfig:
    nms_thr: float = 0.8
    pre_nms_topk: int = 2000
    post_nms_topn: int = 2000
    score_floor: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.nms_thr <= 1.0):
            raise ValueError(f"nms_thr must be in (0, 1], got {self.nms_thr}")
        if self.pre_nms_topk < 1 or self.post_nms_topn < 1:
            raise ValueError("top-k limits must be >= 1")


def rotated_nms(
    boxes: Sequence[OrientedBox], scores: Sequence[float], iou_thr: float
) -> list[int]:
    """Greedy suppression: repeatedly keep the best remaining box and drop
    boxes overlapping it with rotated IoU > iou_thr.

    Returns original indices in keep order (score descending, score ties by
    lower index).
    """
    arr = as_array(boxes)
    sc = np.asarray(list(scores), dtype=np.float64)
    if arr.shape[0] != sc.shape[0]:
        raise ValueError(f"length mismatch: {arr.shape[0]} boxes vs {sc.shape[0]} scores")
    if not (0.0 < iou_thr <= 1.0):
        raise ValueError(f"iou_thr must be in (0, 1], got {iou_thr}")
    order = np.lexsort((np.arange(sc.size), -sc))
    keep: list[int] = []
    alive = np.ones(sc.size, dtype=bool)
    for pos in range(order.size):
        i = order[pos]
        if not alive[i]:
            continue
        keep.append(int(i))
        rest = order[pos + 1 :]
        rest = rest[alive[rest]]
        if rest.size == 0:
            break
        ious = _iou_lanes(np.broadcast_to(arr[i], (rest.size, 5)), arr[rest])
        alive[rest[ious > iou_thr]] = False
    return keep


def fuse_scores(coarse: Sequence[float], fine: Sequence[float]) -> np.ndarray:
    """Elementwise mean of coarse and fine scores."""
    a = np.asarray(coarse, dtype=np.float64)
    b = np.asarray(fine, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"score shape mismatch: {a.shape} vs {b.shape}")
    for name, arr in (("coarse", a), ("fine", b)):
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError(f"{name} scores must lie in [0, 1]")
    return (a + b) / 2.0


def generate_proposals(
    levels: Sequence[LevelPredictions], cfg: ProposalConfig = ProposalConfig()
) -> list[Proposal]:
    """Decode, refine, fuse, pool across levels, NMS, top-n.

    Deterministic: per-level candidates are ordered by (score desc, point
    index), pooling follows the given level order, and NMS ties break by
    pooled index.
    """
    pooled_boxes: list[OrientedBox] = []
    pooled_scores: list[float] = []
    pooled_levels: list[int] = []
    for lvl in levels:
        grid = lvl.coarse.grid
        fused = fuse_scores(lvl.coarse.scores.ravel(), lvl.refine.fine_scores.ravel())
        cand = np.flatnonzero(fused >= cfg.score_floor)
        if cand.size == 0:
            continue
        order = np.lexsort((cand, -fused[cand]))
        cand = cand[order][: cfg.pre_nms_topk]
        pts = grid_points(grid)
        dists = lvl.coarse.distances.reshape(-1, 4)
        angles = lvl.coarse.angles.ravel()
        deltas = lvl.refine.deltas.reshape(-1, 5)
        for idx in cand:
            p = Point(pts[idx, 0], pts[idx, 1])
            coarse = decode_box(p, DistanceVector(*dists[idx]), float(angles[idx]), grid)
            refined = decode_refine(coarse, RefineDeltas(*deltas[idx]))
            pooled_boxes.append(refined)
            pooled_scores.append(float(fused[idx]))
            pooled_levels.append(grid.level)
    if not pooled_boxes:
        return []
    keep = rotated_nms(pooled_boxes, pooled_scores, cfg.nms_thr)[: cfg.post_nms_topn]
    return [Proposal(box=pooled_boxes[i], score=pooled_scores[i], level=pooled_levels[i]) for i in keep]


# ---------------------------------------------------------------------------
# scene simulator

@dataclass(frozen=True)
class SceneConfig:
    """Synthetic-scene knobs.

    Ground truths are sampled with scale sqrt(w*h) log-uniform in
    [min_scale, max_scale], aspect log-uniform within max_aspect, angle
    uniform over the canonical window, and centers keeping the box inside
    the image.  noise is the std of Gaussian perturbations added to the
    regression channels (normalized distances, angles, refine deltas).
    """

    image_size: int = 256
    min_gts: int = 5
    max_gts: int = 5
    min_scale: float = 24.0
    max_scale: float = 96.0
    max_aspect: float = 2.0
    noise: float = 0.0
    pos_score: float = 0.9
    neg_score: float = 0.05
    assigner: AssignerConfig = field(default_factory=AssignerConfig)

    def __post_init__(self):
        if self.image_size < 64:
            raise ValueError("image_size must be >= 64")
        if not (1 <= self.min_gts <= self.max_gts):
            raise ValueError("need 1 <= min_gts <= max_gts")
        if not (0.0 < self.min_scale <= self.max_scale):
            raise ValueError("need 0 < min_scale <= max_scale")
        if self.max_scale > self.image_size / 1.5:
            raise ValueError("max_scale too large for the image")
        if self.max_aspect < 1.0:
            raise ValueError("max_aspect must be >= 1")
        if self.noise < 0.0:
            raise ValueError("noise must be >= 0")
        if not (0.0 <= self.neg_score < self.pos_score <= 1.0):
            raise ValueError("need 0 <= neg_score < pos_score <= 1")


@dataclass(frozen=True)
class Scene:
    gts: tuple[OrientedBox, ...]
    levels: tuple[LevelPredictions, ...]
    assignments: tuple[AssignmentResult, ...] = ()


def scene_to_dict(scene: Scene) -> dict:
    """JSON-ready form of a scene (assignments are derivable and omitted)."""
    return {
        "gts": [list(g.astuple()) for g in scene.gts],
        "levels": [
            {
                "level": lvl.coarse.grid.level,
                "height": lvl.coarse.grid.height,
                "width": lvl.coarse.grid.width,
                "scores": lvl.coarse.scores.tolist(),
                "distances": lvl.coarse.distances.tolist(),
                "angles": lvl.coarse.angles.tolist(),
                "deltas": lvl.refine.deltas.tolist(),
                "fine_scores": lvl.refine.fine_scores.tolist(),
            }
            for lvl in scene.levels
        ],
    }


def scene_from_dict(payload: dict) -> Scene:
    """Inverse of `scene_to_dict`."""
    gts = tuple(OrientedBox(*map(float, row)) for row in payload["gts"])
    levels = []
    for entry in payload["levels"]:
        grid = FeatureGridSpec.for_level(int(entry["level"]), int(entry["height"]), int(entry["width"]))
        levels.append(
            LevelPredictions(
                coarse=PredictionMaps(
                    grid=grid,
                    scores=np.asarray(entry["scores"], dtype=np.float64),
                    distances=np.asarray(entry["distances"], dtype=np.float64),
                    angles=np.asarray(entry["angles"], dtype=np.float64),
                ),
                refine=RefinementMaps(
                    deltas=np.asarray(entry["deltas"], dtype=np.float64),
                    fine_scores=np.asarray(entry["fine_scores"], dtype=np.float64),
                ),
            )
        )
    return Scene(gts=gts, levels=tuple(levels))


def _sample_gt(rng: np.random.Generator, cfg: SceneConfig) -> OrientedBox:
    scale = math.exp(rng.uniform(math.log(cfg.min_scale), math.log(cfg.max_scale)))
    aspect = math.exp(rng.uniform(-math.log(cfg.max_aspect), math.log(cfg.max_aspect)))
    w = scale * math.sqrt(aspect)
    h = scale / math.sqrt(aspect)
    theta = rng.uniform(-math.pi / 4.0, math.pi / 4.0)
    margin = math.hypot(w, h) / 2.0
    lo = margin
    hi = cfg.image_size - margin
    if hi <= lo:
        raise ValueError("infeasible scene config: box does not fit the image")
    cx = rng.uniform(lo, hi)
    cy = rng.uniform(lo, hi)
    return OrientedBox(cx, cy, w, h, theta)


def _assignments_ok(gts: Sequence[OrientedBox], pyramid, cfg: SceneConfig) -> bool:
    """Every gt must keep at least one positive point on its level."""
    per_level: dict[int, list[tuple[int, OrientedBox]]] = {}
    for gi, gt in enumerate(gts):
        pos = assign_level(gt, cfg.assigner, pyramid)
        per_level.setdefault(pos, []).append((gi, gt))
    hit: set[int] = set()
    for pos, entries in per_level.items():
        res = assign_points(pyramid[pos], [g for _, g in entries], cfg.assigner)
        for local_idx in np.unique(res.matched_gt[res.matched_gt >= 0]):
            hit.add(entries[int(local_idx)][0])
    return len(hit) == len(gts)


def simulate_scene(seed: int, cfg: SceneConfig = SceneConfig()) -> Scene:
    """Deterministically sample ground truths and build idealized prediction
    maps around them.

    Positive points carry score pos_score and exact encoded targets plus
    Gaussian noise on the regression channels; negatives carry neg_score
    and neutral regression values.  Refinement deltas are the exact
    corrections from each positive point's decoded (noisy) coarse box to
    its ground truth, again plus noise.  Ground truths are resampled until
    each one owns at least one positive point, so the zero-noise pipeline
    reproduces every gt exactly.
    """
    rng = np.random.default_rng(seed)
    pyramid = FeatureGridSpec.pyramid(cfg.image_size)
    for lvl_spec in pyramid:
        if cfg.image_size % lvl_spec.stride:
            raise ValueError(f"image_size must be divisible by stride {lvl_spec.stride}")

    n_gts = int(rng.integers(cfg.min_gts, cfg.max_gts + 1))
    gts: list[OrientedBox] = []
    attempts = 0
    while len(gts) < n_gts:
        attempts += 1
        if attempts > 200 * n_gts:
            raise ValueError("infeasible scene config: could not place ground truths")
        cand = _sample_gt(rng, cfg)
        if _assignments_ok(gts + [cand], pyramid, cfg):
            gts.append(cand)

    by_level: dict[int, list[tuple[int, OrientedBox]]] = {}
    for gi, gt in enumerate(gts):
        pos = assign_level(gt, cfg.assigner, pyramid)
        by_level.setdefault(pos, []).append((gi, gt))

    levels: list[LevelPredictions] = []
    assignments: list[AssignmentResult] = []
    for pos, grid in enumerate(pyramid):
        entries = by_level.get(pos, [])
        local_gts = [g for _, g in entries]
        res = assign_points(grid, local_gts, cfg.assigner)
        # re-index matched gts into the scene-global numbering
        matched = np.full(res.matched_gt.shape, -1, dtype=np.int64)
        for li, (gi, _) in enumerate(entries):
            matched[res.matched_gt == li] = gi
        res = AssignmentResult(labels=res.labels, matched_gt=matched, level=grid.level)
        assignments.append(res)

        shape = (grid.height, grid.width)
        scores = np.full(shape, cfg.neg_score)
        dists = np.zeros(shape + (4,))
        angles = np.zeros(shape)
        deltas = np.zeros(shape + (5,))
        fine = np.full(shape, cfg.neg_score)

        pts = grid_points(grid)
        flat_pos = res.positives()
        for idx in flat_pos:
            gt = gts[int(res.matched_gt[idx])]
            iy, ix = divmod(int(idx), grid.width)
            dv, theta = encode_distances(Point(pts[idx, 0], pts[idx, 1]), gt, grid)
            scores[iy, ix] = cfg.pos_score
            dists[iy, ix] = dv.astuple()
            angles[iy, ix] = theta
            fine[iy, ix] = cfg.pos_score
        if cfg.noise > 0.0:
            dists += rng.normal(0.0, cfg.noise, dists.shape)
            angles += rng.normal(0.0, cfg.noise, angles.shape)
        for idx in flat_pos:
            gt = gts[int(res.matched_gt[idx])]
            iy, ix = divmod(int(idx), grid.width)
            p = Point(pts[idx, 0], pts[idx, 1])
            coarse = decode_box(p, DistanceVector(*dists[iy, ix]), float(angles[iy, ix]), grid)
            deltas[iy, ix] = encode_refine(coarse, gt).astuple()
        if cfg.noise > 0.0:
            deltas += rng.normal(0.0, cfg.noise, deltas.shape)

        levels.append(
            LevelPredictions(
                coarse=PredictionMaps(grid=grid, scores=scores, distances=dists, angles=angles),
                refine=RefinementMaps(deltas=deltas, fine_scores=fine),
            )
        )
    return Scene(gts=tuple(gts), levels=tuple(levels), assignments=tuple(assignments))
