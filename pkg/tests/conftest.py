import math

import numpy as np
from hypothesis import strategies as st

from obbkit.geometry import OrientedBox


def random_boxes(
    rng: np.random.Generator,
    n: int,
    center_spread: float = 15.0,
    size_lo: float = 10.0,
    size_hi: float = 40.0,
) -> list[OrientedBox]:
    """Clustered random boxes, mostly overlapping each other."""
    out = []
    for _ in range(n):
        out.append(
            OrientedBox(
                cx=float(rng.uniform(-center_spread, center_spread)),
                cy=float(rng.uniform(-center_spread, center_spread)),
                w=float(rng.uniform(size_lo, size_hi)),
                h=float(rng.uniform(size_lo, size_hi)),
                theta=float(rng.uniform(-math.pi, math.pi)),
            )
        )
    return out


def coords(lo=-100.0, hi=100.0):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)


def sizes(lo=0.5, hi=60.0):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)


def angles(lo=-2.0 * math.pi, hi=2.0 * math.pi):
    return st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False)


def boxes_st(size_lo=0.5, size_hi=60.0):
    return st.builds(
        OrientedBox,
        cx=coords(),
        cy=coords(),
        w=sizes(size_lo, size_hi),
        h=sizes(size_lo, size_hi),
        theta=angles(),
    )
