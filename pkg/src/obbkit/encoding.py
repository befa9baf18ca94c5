"""Box <-> regression-target coders.

The dense coder turns a positive point into four side distances measured in
the ground truth's local frame,

    l = w/2 + x',  r = w/2 - x',  t = h/2 + y',  b = h/2 - y',

log-normalized by the level's normalizer z, with the raw angle as the fifth
target.  The refinement coder expresses a gt relative to a proposal as
rotated-frame center offsets, log size ratios, and an additive angle delta.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .assignment import FeatureGridSpec
from .geometry import OrientedBox, Point, canonicalize, from_local, to_local

__all__ = [
    "DistanceVector",
    "RefineDeltas",
    "PointOutsideBoxError",
    "encode_distances",
    "decode_box",
    "encode_refine",
    "decode_refine",
    "wrap_half_pi",
]


class PointOutsideBoxError(ValueError):
    """Encoding requested for a point not strictly inside the box."""


@dataclass(frozen=True)
class DistanceVector:
    """Left/top/right/bottom side distances; raw (pixels) or log-normalized."""

    l: float
    t: float
    r: float
    b: float

    def __post_init__(self):
        for name in ("l", "t", "r", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not all(math.isfinite(v) for v in (self.l, self.t, self.r, self.b)):
            raise ValueError(f"non-finite distance vector {self.astuple()}")

    def astuple(self) -> tuple[float, float, float, float]:
        return (self.l, self.t, self.r, self.b)

    def normalize(self, z: float) -> "DistanceVector":
        """Raw pixels -> log(d / z)."""
        return DistanceVector(*(math.log(v / z) for v in self.astuple()))

    def denormalize(self, z: float) -> "DistanceVector":
        """log(d / z) -> raw pixels, exact inverse of `normalize`."""
        return DistanceVector(*(z * math.exp(v) for v in self.astuple()))


@dataclass(frozen=True)
class RefineDeltas:
    """Proposal -> gt correction: center offsets in proposal-frame units of
    (w, h), log size ratios, additive angle in (-pi/2, pi/2]."""

    dx: float
    dy: float
    dw: float
    dh: float
    dtheta: float

    def __post_init__(self):
        for name in ("dx", "dy", "dw", "dh", "dtheta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.dx, self.dy, self.dw, self.dh, self.dtheta)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite refine deltas {vals}")

    def astuple(self) -> tuple[float, float, float, float, float]:
        return (self.dx, self.dy, self.dw, self.dh, self.dtheta)


def wrap_half_pi(angle: float) -> float:
    """Wrap into (-pi/2, pi/2] (a rectangle's angle is defined mod pi)."""
    out = math.fmod(angle, math.pi)
    if out > math.pi / 2.0:
        out -= math.pi
    elif out <= -math.pi / 2.0:
        out += math.pi
    return out


def encode_distances(
    p: Point, gt: OrientedBox, grid: FeatureGridSpec
) -> tuple[DistanceVector, float]:
    """Log-normalized side distances of a positive point, plus the gt angle.

    Raises PointOutsideBoxError when any raw distance is <= 0, i.e. the
    point is not strictly interior.
    """
    q = to_local(p, gt)
    raw = DistanceVector(
        l=gt.w / 2.0 + q.x,
        t=gt.h / 2.0 + q.y,
        r=gt.w / 2.0 - q.x,
        b=gt.h / 2.0 - q.y,
    )
    if min(raw.astuple()) <= 0.0:
        raise PointOutsideBoxError(f"point {p} outside box {gt}: raw distances {raw.astuple()}")
    return raw.normalize(grid.normalizer), gt.theta


def decode_box(
    p: Point, dist_normalized: DistanceVector, theta: float, grid: FeatureGridSpec
) -> OrientedBox:
    """Invert `encode_distances` at point p; result is canonical."""
    if not math.isfinite(theta):
        raise ValueError(f"non-finite angle {theta}")
    raw = dist_normalized.denormalize(grid.normalizer)
    w = raw.l + raw.r
    h = raw.t + raw.b
    xl = (raw.l - raw.r) / 2.0
    yl = (raw.t - raw.b) / 2.0
    # center = p - R(theta)^T (x', y')
    cos = math.cos(theta)
    sin = math.sin(theta)
    center_x = p.x - (cos * xl + sin * yl)
    center_y = p.y - (-sin * xl + cos * yl)
    return canonicalize(OrientedBox(center_x, center_y, w, h, theta))


def encode_refine(proposal: OrientedBox, gt: OrientedBox) -> RefineDeltas:
    """Deltas carrying a proposal onto a gt; identity when they coincide."""
    q = to_local(Point(gt.cx, gt.cy), proposal)
    return RefineDeltas(
        dx=q.x / proposal.w,
        dy=q.y / proposal.h,
        dw=math.log(gt.w / proposal.w),
        dh=math.log(gt.h / proposal.h),
        dtheta=wrap_half_pi(gt.theta - proposal.theta),
    )


def decode_refine(proposal: OrientedBox, d: RefineDeltas) -> OrientedBox:
    """Exact inverse of `encode_refine`, followed by canonicalization."""
    center = from_local(Point(d.dx * proposal.w, d.dy * proposal.h), proposal)
    return canonicalize(
        OrientedBox(
            center.x,
            center.y,
            proposal.w * math.exp(d.dw),
            proposal.h * math.exp(d.dh),
            proposal.theta + d.dtheta,
        )
    )
