"""Box-guided deformable sampling.

Instead of learning offsets, the 3x3 sampling lattice at each feature-grid
position is pinned to the oriented box predicted there: kernel element
r = (rx, ry) samples the box point at local ((w/2) rx, (h/2) ry), i.e. the
center, edge midpoints, and corners.  Offsets are expressed relative to
the regular kernel grid so a standard deformable convolution consumes them.

Conventions: feature maps are (C, H, W) float arrays; a grid position
p = (ix, iy) corresponds to image pixel (ix * stride, iy * stride); all
sampling positions and offsets are in feature-grid units (pixels / stride).
Kernel elements are ordered row-major in (ry, rx), index k = (ry+1)*3+(rx+1).
"""
from __future__ import annotations

import math

import numpy as np

from .assignment import FeatureGridSpec
from .geometry import OrientedBox, as_array

__all__ = [
    "KERNEL_OFFSETS",
    "sampling_positions",
    "offset_field",
    "bilinear_sample",
    "align_forward",
]

KERNEL_OFFSETS = tuple((rx, ry) for ry in (-1, 0, 1) for rx in (-1, 0, 1))

_KERNEL_RX = np.array([r[0] for r in KERNEL_OFFSETS], dtype=np.float64)
_KERNEL_RY = np.array([r[1] for r in KERNEL_OFFSETS], dtype=np.float64)


def sampling_positions(
    box: OrientedBox, p: tuple[int, int], grid: FeatureGridSpec
) -> np.ndarray:
    """The box's 3x3 sampling lattice in feature-grid units, (9, 2).

    Lattice point k sits at (center + R(theta)^T ((w/2) rx, (h/2) ry)) / stride,
    so element (0, 0) is exactly center / stride and the (+-1, +-1) elements
    are the box corners.  p must lie on the grid; the lattice itself depends
    only on the box (offsets relative to p come from `offset_field`).
    """
    ix, iy = p
    if not (0 <= ix < grid.width and 0 <= iy < grid.height):
        raise ValueError(f"position {p} outside {grid.width}x{grid.height} grid")
    cos = math.cos(box.theta)
    sin = math.sin(box.theta)
    vx = (box.w / 2.0) * _KERNEL_RX
    vy = (box.h / 2.0) * _KERNEL_RY
    s = float(grid.stride)
    x = (box.cx + cos * vx + sin * vy) / s
    y = (box.cy - sin * vx + cos * vy) / s
    return np.stack([x, y], axis=1)


def _boxes_map_to_array(boxes, grid: FeatureGridSpec) -> np.ndarray:
    """Per-position boxes -> (H, W, 5) float array, validated."""
    if isinstance(boxes, np.ndarray) and boxes.ndim == 3:
        arr = np.asarray(boxes, dtype=np.float64)
    else:
        rows = [as_array(list(row)) for row in boxes]
        arr = np.stack(rows, axis=0)
    if arr.shape != (grid.height, grid.width, 5):
        raise ValueError(f"box map shape {arr.shape} does not match grid ({grid.height}, {grid.width}, 5)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite values in box map")
    if np.any(arr[..., 2] <= 0) or np.any(arr[..., 3] <= 0):
        raise ValueError("box map has nonpositive w or h")
    return arr


def offset_field(boxes, grid: FeatureGridSpec) -> np.ndarray:
    """Per-position, per-kernel-element sampling offsets, (H, W, 9, 2).

    offset(p, r) = lattice_point(box at p, r) - p - r, all in grid units;
    a box of size (2*stride, 2*stride), angle 0, centered at p's pixel
    position yields the regular kernel grid, hence zero offsets.
    """
    arr = _boxes_map_to_array(boxes, grid)
    cx, cy, w, h, th = (arr[..., i] for i in range(5))
    cos = np.cos(th)[..., None]
    sin = np.sin(th)[..., None]
    vx = (w[..., None] / 2.0) * _KERNEL_RX
    vy = (h[..., None] / 2.0) * _KERNEL_RY
    s = float(grid.stride)
    lat_x = (cx[..., None] + cos * vx + sin * vy) / s
    lat_y = (cy[..., None] - sin * vx + cos * vy) / s
    px = np.arange(grid.width, dtype=np.float64)[None, :, None]
    py = np.arange(grid.height, dtype=np.float64)[:, None, None]
    ox = lat_x - px - _KERNEL_RX
    oy = lat_y - py - _KERNEL_RY
    return np.stack([ox, oy], axis=-1)


def bilinear_sample(fm: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a (C, H, W) map at fractional (x, y)
    positions (..., 2); out-of-bounds corner contributions are zero.

    Returns (C, ...); integer positions reproduce stored values exactly.
    """
    fm = np.asarray(fm, dtype=np.float64)
    if fm.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {fm.shape}")
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape[-1] != 2:
        raise ValueError(f"positions must end in a length-2 axis, got {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise ValueError("non-finite sampling positions")
    c, hgt, wid = fm.shape
    flat = pos.reshape(-1, 2)
    x = flat[:, 0]
    y = flat[:, 1]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    out = np.zeros((c, flat.shape[0]))
    for dx, dy, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < wid) & (yi >= 0) & (yi < hgt)
        vals = fm[:, np.clip(yi, 0, hgt - 1), np.clip(xi, 0, wid - 1)]
        out += vals * (wgt * ok)
    return out.reshape((c,) + pos.shape[:-1])


def align_forward(
    fm: np.ndarray, weights: np.ndarray, boxes, grid: FeatureGridSpec
) -> np.ndarray:
    """Deformable 3x3 forward pass with box-derived offsets.

    Y(p) = sum_r W(r) * X(p + r + offset(p, r)); weights are depthwise,
    either (3, 3) shared across channels or (C, 3, 3).  With uniform 1/9
    weights and a coordinate-valued input map this returns each box's
    center in grid units -- the alignment property.
    """
    fm = np.asarray(fm, dtype=np.float64)
    if fm.ndim != 3:
        raise ValueError(f"feature map must be (C, H, W), got shape {fm.shape}")
    c, hgt, wid = fm.shape
    if (hgt, wid) != (grid.height, grid.width):
        raise ValueError(f"feature map {hgt}x{wid} does not match grid {grid.height}x{grid.width}")
    wts = np.asarray(weights, dtype=np.float64)
    if wts.shape == (3, 3):
        wts = np.broadcast_to(wts, (c, 3, 3))
    if wts.shape != (c, 3, 3):
        raise ValueError(f"weights must be (3, 3) or ({c}, 3, 3), got {wts.shape}")
    if not np.all(np.isfinite(wts)):
        raise ValueError("non-finite kernel weights")
    offsets = offset_field(boxes, grid)
    px = np.arange(wid, dtype=np.float64)[None, :, None]
    py = np.arange(hgt, dtype=np.float64)[:, None, None]
    sample_x = px + _KERNEL_RX + offsets[..., 0]
    sample_y = py + _KERNEL_RY + offsets[..., 1]
    samples = bilinear_sample(fm, np.stack([sample_x, sample_y], axis=-1))  # (C, H, W, 9)
    wflat = wts.reshape(c, 9)  # row-major (ry, rx) matches KERNEL_OFFSETS
    return np.einsum("chwk,ck->chw", samples, wflat)
