"""Oriented-rectangle primitives.

A box is (cx, cy, w, h, theta): center in image pixels, side lengths in
pixels, and theta the clockwise angle (radians) between the w-side and the
x-axis.  Image convention throughout: y points down.  The local frame of a
box is reached by

    (x', y') = R(theta) @ (p - center),   R = [[cos, -sin], [sin, cos]]

so the box interior is |x'| <= w/2, |y'| <= h/2.  Rotated IoU is exact
convex-polygon clipping (Sutherland-Hodgman); a seeded Monte-Carlo
estimator is provided as an independent cross-check.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "InvalidBoxError",
    "Point",
    "OrientedBox",
    "canonicalize",
    "corners",
    "to_local",
    "from_local",
    "contains",
    "box_area",
    "rotated_iou",
    "iou_matrix",
    "iou_pairwise",
    "iou_oracle_mc",
    "min_area_enclosing_box",
    "as_array",
    "from_array",
]

_QUARTER_PI = math.pi / 4.0
_HALF_PI = math.pi / 2.0

# Area below which a clipped intersection counts as empty.
DEGENERATE_AREA = 1e-12


class InvalidBoxError(ValueError):
    """Box with nonpositive sides or non-finite fields."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        # normalize numpy scalars and ints to plain floats
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class OrientedBox:
    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        for name in ("cx", "cy", "w", "h", "theta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.cx, self.cy, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidBoxError(f"non-finite box field in {vals}")
        if self.w <= 0.0 or self.h <= 0.0:
            raise InvalidBoxError(f"box sides must be positive, got w={self.w} h={self.h}")

    @property
    def center(self) -> Point:
        return Point(self.cx, self.cy)

    @property
    def area(self) -> float:
        return self.w * self.h

    def astuple(self) -> tuple[float, float, float, float, float]:
        return (self.cx, self.cy, self.w, self.h, self.theta)


def box_area(box: OrientedBox) -> float:
    return box.w * box.h


def canonicalize(box: OrientedBox) -> OrientedBox:
    """Reduce theta into [-pi/4, pi/4), swapping w/h per quarter turn.

    The vertex set is unchanged; the result is the unique representative in
    the half-open window (squares included: their quarter-turn symmetry
    collapses to the same angle).
    """
    k = math.floor((box.theta + _QUARTER_PI) / _HALF_PI)
    theta = box.theta - k * _HALF_PI
    # guard against float drift at the window edges
    if theta < -_QUARTER_PI:
        theta += _HALF_PI
        k -= 1
    elif theta >= _QUARTER_PI:
        theta -= _HALF_PI
        k += 1
    w, h = (box.h, box.w) if k % 2 else (box.w, box.h)
    return OrientedBox(box.cx, box.cy, w, h, theta)


# Corner sign pattern, counter-clockwise in standard math orientation.
_CORNER_SIGNS = ((-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0))


def corners(box: OrientedBox) -> tuple[Point, Point, Point, Point]:
    """Vertices of the box, counter-clockwise (math orientation).

    Corner at local (sx*w/2, sy*h/2) maps to center + R(theta)^T (vx, vy).
    """
    cos = math.cos(box.theta)
    sin = math.sin(box.theta)
    pts = []
    for sx, sy in _CORNER_SIGNS:
        vx = sx * box.w / 2.0
        vy = sy * box.h / 2.0
        pts.append(Point(box.cx + cos * vx + sin * vy, box.cy - sin * vx + cos * vy))
    return tuple(pts)


def to_local(p: Point, box: OrientedBox) -> Point:
    """Image frame -> box frame: (x', y') = R(theta) @ (p - center)."""
    cos = math.cos(box.theta)
    sin = math.sin(box.theta)
    dx = p.x - box.cx
    dy = p.y - box.cy
    return Point(cos * dx - sin * dy, sin * dx + cos * dy)


def from_local(p: Point, box: OrientedBox) -> Point:
    """Box frame -> image frame, exact inverse of `to_local`."""
    cos = math.cos(box.theta)
    sin = math.sin(box.theta)
    return Point(box.cx + cos * p.x + sin * p.y, box.cy - sin * p.x + cos * p.y)


def contains(box: OrientedBox, p: Point, tol: float = 0.0) -> bool:
    """Closed-box membership with optional tolerance in pixels."""
    q = to_local(p, box)
    return abs(q.x) <= box.w / 2.0 + tol and abs(q.y) <= box.h / 2.0 + tol


# ---------------------------------------------------------------------------
# array helpers

def as_array(boxes: Iterable[OrientedBox] | np.ndarray) -> np.ndarray:
    """(n, 5) float64 view of a box sequence; validates array input."""
    if isinstance(boxes, np.ndarray):
        arr = np.asarray(boxes, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 5:
            raise InvalidBoxError(f"box array must be (n, 5), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidBoxError("non-finite values in box array")
        if arr.size and (np.any(arr[:, 2] <= 0) or np.any(arr[:, 3] <= 0)):
            raise InvalidBoxError("box array has nonpositive w or h")
        return arr
    return np.array([b.astuple() for b in boxes], dtype=np.float64).reshape(-1, 5)


def from_array(arr: np.ndarray) -> list[OrientedBox]:
    return [OrientedBox(*map(float, row)) for row in np.asarray(arr, dtype=np.float64).reshape(-1, 5)]


def _corners_arr(b: np.ndarray) -> np.ndarray:
    """Vectorized `corners`: (..., 5) -> (..., 4, 2), same order and arithmetic."""
    cx, cy, w, h, th = (b[..., i] for i in range(5))
    cos = np.cos(th)[..., None]
    sin = np.sin(th)[..., None]
    signs = np.asarray(_CORNER_SIGNS)
    vx = signs[:, 0] * (w[..., None] / 2.0)
    vy = signs[:, 1] * (h[..., None] / 2.0)
    x = cx[..., None] + cos * vx + sin * vy
    y = cy[..., None] - sin * vx + cos * vy
    return np.stack([x, y], axis=-1)


# ---------------------------------------------------------------------------
# rotated IoU via Sutherland-Hodgman clipping

def _clip_intersection_areas(subj: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Intersection areas of paired convex quads, one lane per pair.

    subj, clip: (n, 4, 2) with counter-clockwise vertex order (math
    orientation).  Clips each subject against the four half-planes of its
    clip quad; vertex counts are tracked per lane, buffers are padded.
    """
    n = subj.shape[0]
    if n == 0:
        return np.zeros(0)
    lanes = np.arange(n)
    poly = subj
    cnt = np.full(n, 4, dtype=np.int64)
    for e in range(4):
        a = clip[:, e]
        b = clip[:, (e + 1) % 4]
        ex = b[:, 0] - a[:, 0]
        ey = b[:, 1] - a[:, 1]
        max_in = poly.shape[1]
        out = np.zeros((n, max_in + 1, 2))
        out_cnt = np.zeros(n, dtype=np.int64)
        for s in range(max_in):
            active = s < cnt
            if not active.any():
                break
            cur = poly[:, s]
            prev = poly[lanes, cnt - 1] if s == 0 else poly[:, s - 1]
            cur_side = ex * (cur[:, 1] - a[:, 1]) - ey * (cur[:, 0] - a[:, 0])
            prev_side = ex * (prev[:, 1] - a[:, 1]) - ey * (prev[:, 0] - a[:, 0])
            cur_in = cur_side >= 0.0
            prev_in = prev_side >= 0.0
            crossing = active & (cur_in != prev_in)
            if crossing.any():
                # parametric point on the prev->cur segment; the sign flip
                # guarantees |den| >= |prev_side| > 0, so t is in [0, 1] and
                # the vertex stays bounded even for near-collinear edges
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = prev_side / (prev_side - cur_side)
                t = np.clip(t, 0.0, 1.0)
                px = prev[:, 0] + t * (cur[:, 0] - prev[:, 0])
                py = prev[:, 1] + t * (cur[:, 1] - prev[:, 1])
                rows = lanes[crossing]
                out[rows, out_cnt[crossing], 0] = px[crossing]
                out[rows, out_cnt[crossing], 1] = py[crossing]
                out_cnt[crossing] += 1
            keep = active & cur_in
            if keep.any():
                rows = lanes[keep]
                out[rows, out_cnt[keep]] = cur[keep]
                out_cnt[keep] += 1
        poly = out
        cnt = out_cnt
    area2 = np.zeros(n)
    max_v = poly.shape[1]
    for s in range(max_v):
        valid = s < cnt
        if not valid.any():
            break
        nxt = np.where(s + 1 < cnt, s + 1, 0)
        x0 = poly[:, s, 0]
        y0 = poly[:, s, 1]
        x1 = poly[lanes, nxt, 0]
        y1 = poly[lanes, nxt, 1]
        area2 += np.where(valid, x0 * y1 - x1 * y0, 0.0)
    area = np.abs(area2) / 2.0
    return np.where(cnt >= 3, area, 0.0)


def _quad_areas(quads: np.ndarray) -> np.ndarray:
    """Shoelace area of (n, 4, 2) quads, accumulated in the same slot order
    as the clipping shoelace so identical polygons give identical bits."""
    area2 = np.zeros(quads.shape[0])
    for s in range(4):
        nxt = (s + 1) % 4
        area2 += quads[:, s, 0] * quads[:, nxt, 1] - quads[:, nxt, 0] * quads[:, s, 1]
    return np.abs(area2) / 2.0


def _iou_lanes(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU per lane for paired (n, 5) box arrays.

    Box areas use the same shoelace evaluation as the clipped intersection,
    so identical boxes give exactly 1.0.
    """
    ca = _corners_arr(a)
    cb = _corners_arr(b)
    inter = _clip_intersection_areas(ca, cb)
    union = _quad_areas(ca) + _quad_areas(cb) - inter
    with np.errstate(invalid="ignore"):
        iou = inter / union
    iou = np.where(inter < DEGENERATE_AREA, 0.0, iou)
    iou = np.where(np.isfinite(iou), np.clip(iou, 0.0, 1.0), 0.0)
    return iou


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Exact rotated IoU by convex polygon clipping; degenerate overlap -> 0."""
    return float(_iou_lanes(as_array([a]), as_array([b]))[0])


def iou_pairwise(a, b) -> np.ndarray:
    """Elementwise IoU of two equal-length box sequences, (n,)."""
    aa = as_array(a)
    bb = as_array(b)
    if aa.shape[0] != bb.shape[0]:
        raise ValueError(f"length mismatch: {aa.shape[0]} vs {bb.shape[0]}")
    return _iou_lanes(aa, bb)


def _thread_count() -> int:
    raw = os.environ.get("OBBKIT_THREADS", "0")
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"OBBKIT_THREADS must be an integer, got {raw!r}")
    if val < 0:
        raise ValueError(f"OBBKIT_THREADS must be >= 0, got {val}")
    if val == 0:
        return min(os.cpu_count() or 1, 8)
    return val


_LANE_CHUNK = 262144


def iou_matrix(a, b) -> np.ndarray:
    """Full (n, m) rotated-IoU matrix; chunked, optionally threaded.

    Chunks are independent and written to disjoint output rows, so the
    result is deterministic regardless of OBBKIT_THREADS.
    """
    aa = as_array(a)
    bb = as_array(b)
    na, nb = aa.shape[0], bb.shape[0]
    out = np.zeros((na, nb))
    if na == 0 or nb == 0:
        return out
    rows_per_chunk = max(1, _LANE_CHUNK // nb)
    spans = [(i, min(i + rows_per_chunk, na)) for i in range(0, na, rows_per_chunk)]

    def run(span):
        lo, hi = span
        block_a = np.repeat(aa[lo:hi], nb, axis=0)
        block_b = np.tile(bb, (hi - lo, 1))
        out[lo:hi] = _iou_lanes(block_a, block_b).reshape(hi - lo, nb)

    workers = _thread_count()
    if workers > 1 and len(spans) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)
    return out


def iou_oracle_mc(a: OrientedBox, b: OrientedBox, samples: int, seed: int) -> float:
    """Monte-Carlo IoU: uniform samples over the joint corner bounding box,
    membership by the local-frame test of `to_local`/`contains`.  Seeded and
    deterministic; independent of the clipping path."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    pts = np.concatenate([_corners_arr(as_array([a]))[0], _corners_arr(as_array([b]))[0]])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(lo[0], hi[0], samples)
    ys = rng.uniform(lo[1], hi[1], samples)

    def member(box: OrientedBox) -> np.ndarray:
        cos = math.cos(box.theta)
        sin = math.sin(box.theta)
        dx = xs - box.cx
        dy = ys - box.cy
        xl = cos * dx - sin * dy
        yl = sin * dx + cos * dy
        return (np.abs(xl) <= box.w / 2.0) & (np.abs(yl) <= box.h / 2.0)

    in_a = member(a)
    in_b = member(b)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(in_a & in_b) / union)


# ---------------------------------------------------------------------------
# minimum-area enclosing rectangle (rotating calipers over the convex hull)

def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, collinear points dropped;  (k, 2)."""
    uniq = np.unique(pts, axis=0)
    if uniq.shape[0] < 3:
        return uniq
    pts_l = [tuple(p) for p in uniq]

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts_l:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts_l):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def min_area_enclosing_box(points) -> OrientedBox:
    """Smallest-area oriented rectangle covering the points, canonicalized.

    The optimum shares a direction with some hull edge, so scanning hull
    edges is exhaustive; exact (up to float) on inputs that are themselves
    rectangle corners.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise InvalidBoxError("non-finite polygon coordinates")
    hull = _convex_hull(pts)
    if hull.shape[0] < 3:
        raise InvalidBoxError("degenerate polygon: needs >= 3 non-collinear points")
    best = None
    k = hull.shape[0]
    for i in range(k):
        edge = hull[(i + 1) % k] - hull[i]
        norm = math.hypot(edge[0], edge[1])
        if norm == 0.0:
            continue
        u = edge / norm
        v = np.array([-u[1], u[0]])
        pu = hull @ u
        pv = hull @ v
        w = pu.max() - pu.min()
        h = pv.max() - pv.min()
        if best is None or w * h < best[0]:
            best = (w * h, u, v, (pu.min() + pu.max()) / 2.0, (pv.min() + pv.max()) / 2.0, w, h)
    assert best is not None
    _, u, v, cu, cv, w, h = best
    center = cu * u + cv * v
    theta = -math.atan2(u[1], u[0])
    return canonicalize(OrientedBox(float(center[0]), float(center[1]), float(w), float(h), theta))
