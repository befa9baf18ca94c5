import math

import numpy as np
import pytest
from hypothesis import given, settings

from conftest import angles, boxes_st, random_boxes
from obbkit.geometry import (
    InvalidBoxError,
    OrientedBox,
    Point,
    canonicalize,
    contains,
    corners,
    from_local,
    iou_matrix,
    iou_oracle_mc,
    iou_pairwise,
    min_area_enclosing_box,
    rotated_iou,
    to_local,
)

QP = math.pi / 4


def corner_oracle(box: OrientedBox) -> set[tuple[float, float]]:
    """Rotation-matrix corner enumeration, independent of `corners`."""
    rot = np.array(
        [
            [math.cos(box.theta), math.sin(box.theta)],
            [-math.sin(box.theta), math.cos(box.theta)],
        ]
    )
    out = set()
    for sx in (-1, 1):
        for sy in (-1, 1):
            v = rot @ np.array([sx * box.w / 2, sy * box.h / 2])
            out.add((round(box.cx + v[0], 6), round(box.cy + v[1], 6)))
    return out


def vertex_sets_equal(a: OrientedBox, b: OrientedBox, tol=1e-9) -> bool:
    pa = [(p.x, p.y) for p in corners(a)]
    pb = [(p.x, p.y) for p in corners(b)]
    used = set()
    for x, y in pa:
        hit = None
        for j, (u, v) in enumerate(pb):
            if j not in used and math.hypot(x - u, y - v) <= tol:
                hit = j
                break
        if hit is None:
            return False
        used.add(hit)
    return True


class TestBoxValidation:
    def test_nonpositive_sides(self):
        with pytest.raises(InvalidBoxError):
            OrientedBox(0, 0, 0, 1, 0)
        with pytest.raises(InvalidBoxError):
            OrientedBox(0, 0, 1, -2, 0)

    def test_non_finite(self):
        with pytest.raises(InvalidBoxError):
            OrientedBox(0, 0, 1, 1, math.nan)
        with pytest.raises(InvalidBoxError):
            OrientedBox(math.inf, 0, 1, 1, 0)


class TestCanonicalize:
    def test_already_canonical(self):
        b = canonicalize(OrientedBox(0, 0, 2, 4, 0))
        assert b == OrientedBox(0, 0, 2, 4, 0)

    def test_third_pi_swaps(self):
        b = canonicalize(OrientedBox(0, 0, 2, 4, math.pi / 3))
        assert (b.cx, b.cy, b.w, b.h) == (0, 0, 4, 2)
        assert b.theta == pytest.approx(-math.pi / 6, abs=1e-12)
        assert vertex_sets_equal(b, OrientedBox(0, 0, 2, 4, math.pi / 3))

    def test_half_open_boundary(self):
        b = canonicalize(OrientedBox(0, 0, 3, 3, QP))
        assert b.theta == pytest.approx(-QP, abs=1e-12)
        assert b.theta < QP
        assert (b.w, b.h) == (3, 3)

    @given(boxes_st())
    def test_window_and_idempotence(self, box):
        c = canonicalize(box)
        assert -QP <= c.theta < QP
        assert canonicalize(c) == c

    @given(boxes_st(size_lo=1.0))
    @settings(max_examples=200)
    def test_vertex_set_preserved(self, box):
        assert vertex_sets_equal(box, canonicalize(box), tol=1e-9 * max(1.0, box.w + box.h))

    def test_quarter_turn_swaps_sides(self):
        b = OrientedBox(1, 2, 3, 7, 0.1)
        for k in (-2, -1, 1, 2, 3):
            c = canonicalize(OrientedBox(1, 2, 3, 7, 0.1 + k * math.pi / 2))
            expect = (7, 3) if k % 2 else (3, 7)
            assert (c.w, c.h) == expect
            assert c.theta == pytest.approx(0.1, abs=1e-12)


class TestCorners:
    def test_axis_aligned(self):
        pts = {(p.x, p.y) for p in corners(OrientedBox(0, 0, 2, 2, 0))}
        assert pts == {(-1, -1), (1, -1), (1, 1), (-1, 1)}

    def test_translation(self):
        base = [(p.x, p.y) for p in corners(OrientedBox(0, 0, 2, 2, 0))]
        moved = [(p.x, p.y) for p in corners(OrientedBox(5, 5, 2, 2, 0))]
        assert moved == [(x + 5, y + 5) for x, y in base]

    def test_rotated_square(self):
        s = math.sqrt(2)
        pts = {(round(p.x, 9), round(p.y, 9)) for p in corners(OrientedBox(0, 0, 2, 2, QP))}
        expect = {(0.0, -round(s, 9)), (round(s, 9), 0.0), (0.0, round(s, 9)), (-round(s, 9), 0.0)}
        assert pts == expect

    @given(boxes_st())
    @settings(max_examples=200)
    def test_against_rotation_oracle(self, box):
        pts = {(round(p.x, 6), round(p.y, 6)) for p in corners(box)}
        assert pts == corner_oracle(box)

    @given(boxes_st())
    def test_centroid_and_edges(self, box):
        pts = corners(box)
        cx = sum(p.x for p in pts) / 4
        cy = sum(p.y for p in pts) / 4
        assert math.hypot(cx - box.cx, cy - box.cy) < 1e-9 * max(1.0, abs(box.cx) + abs(box.cy))
        e1 = math.hypot(pts[1].x - pts[0].x, pts[1].y - pts[0].y)
        e2 = math.hypot(pts[2].x - pts[1].x, pts[2].y - pts[1].y)
        assert e1 == pytest.approx(box.w, rel=1e-9)
        assert e2 == pytest.approx(box.h, rel=1e-9)


class TestLocalFrame:
    def test_center_maps_to_origin(self):
        box = OrientedBox(3, -2, 5, 7, 0.9)
        q = to_local(Point(3, -2), box)
        assert (q.x, q.y) == (0, 0)

    def test_pure_translation(self):
        box = OrientedBox(10, 20, 4, 4, 0)
        q = to_local(Point(13, 18), box)
        assert (q.x, q.y) == (3, -2)

    def test_rotation_matrix_oracle(self):
        box = OrientedBox(0, 0, 4, 4, math.pi / 6)
        q = to_local(Point(1, 0), box)
        assert q.x == pytest.approx(math.cos(math.pi / 6), abs=1e-12)
        assert q.y == pytest.approx(math.sin(math.pi / 6), abs=1e-12)

    @given(boxes_st(), angles(-50, 50), angles(-50, 50))
    @settings(max_examples=200)
    def test_round_trip(self, box, dx, dy):
        p = Point(box.cx + dx, box.cy + dy)
        back = from_local(to_local(p, box), box)
        assert math.hypot(back.x - p.x, back.y - p.y) < 1e-9 * max(1.0, abs(dx) + abs(dy))


class TestRotatedIoU:
    def test_self_iou_is_exactly_one(self):
        for theta in (0.0, 0.3, -0.7, 1.1):
            b = OrientedBox(0, 0, 4, 2, theta)
            assert rotated_iou(b, b) == 1.0

    def test_disjoint(self):
        assert rotated_iou(OrientedBox(0, 0, 2, 2, 0), OrientedBox(10, 10, 2, 2, 0)) == 0.0

    def test_unit_square_45(self):
        v = rotated_iou(OrientedBox(0, 0, 1, 1, 0), OrientedBox(0, 0, 1, 1, QP))
        assert v == pytest.approx(1 / math.sqrt(2), abs=1e-9)

    def test_contained_box(self):
        outer = OrientedBox(0, 0, 8, 4, 0.5)
        inner = OrientedBox(0, 0, 4, 2, 0.5)
        assert rotated_iou(outer, inner) == pytest.approx(0.25, abs=1e-12)

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(3)
        boxes = random_boxes(rng, 40)
        for a, b in zip(boxes[:20], boxes[20:]):
            ab = rotated_iou(a, b)
            ba = rotated_iou(b, a)
            assert 0.0 <= ab <= 1.0
            assert ab == pytest.approx(ba, abs=1e-12)

    def test_translation_and_joint_rotation_invariance(self):
        rng = np.random.default_rng(4)
        for i in range(20):
            a, b = random_boxes(rng, 2)
            base = rotated_iou(a, b)
            shifted = rotated_iou(
                OrientedBox(a.cx + 11, a.cy - 7, a.w, a.h, a.theta),
                OrientedBox(b.cx + 11, b.cy - 7, b.w, b.h, b.theta),
            )
            assert shifted == pytest.approx(base, abs=1e-9)
            # rotate both about the origin by phi
            phi = rng.uniform(-math.pi, math.pi)
            cos, sin = math.cos(phi), math.sin(phi)

            def rot(box):
                # image-frame rotation: (x, y) -> (c x + s y, -s x + c y), theta += phi
                return OrientedBox(
                    cos * box.cx + sin * box.cy,
                    -sin * box.cx + cos * box.cy,
                    box.w,
                    box.h,
                    box.theta + phi,
                )

            assert rotated_iou(rot(a), rot(b)) == pytest.approx(base, abs=1e-9)

    def test_mc_cross_check(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for i in range(100):
            a, b = random_boxes(rng, 2)
            clip = rotated_iou(a, b)
            mc = iou_oracle_mc(a, b, 100000, seed=i)
            worst = max(worst, abs(clip - mc))
        assert worst < 0.01

    def test_matrix_matches_scalar(self):
        rng = np.random.default_rng(6)
        a = random_boxes(rng, 12)
        b = random_boxes(rng, 7)
        mat = iou_matrix(a, b)
        assert mat.shape == (12, 7)
        for i in range(12):
            for j in range(7):
                assert mat[i, j] == rotated_iou(a[i], b[j])

    def test_pairwise_length_mismatch(self):
        rng = np.random.default_rng(7)
        with pytest.raises(ValueError):
            iou_pairwise(random_boxes(rng, 3), random_boxes(rng, 4))


class TestThreadCap:
    def test_threaded_matrix_matches_serial(self, monkeypatch):
        import obbkit.geometry as geo

        rng = np.random.default_rng(13)
        a = random_boxes(rng, 30)
        b = random_boxes(rng, 30)
        monkeypatch.setenv("OBBKIT_THREADS", "1")
        serial = iou_matrix(a, b)
        monkeypatch.setattr(geo, "_LANE_CHUNK", 64)  # force many chunks
        monkeypatch.setenv("OBBKIT_THREADS", "4")
        threaded = iou_matrix(a, b)
        assert np.array_equal(serial, threaded)

    def test_invalid_env_value_rejected(self, monkeypatch):
        monkeypatch.setenv("OBBKIT_THREADS", "many")
        rng = np.random.default_rng(14)
        with pytest.raises(ValueError):
            iou_matrix(random_boxes(rng, 2), random_boxes(rng, 2))


class TestMcOracle:
    def test_self_box(self):
        b = OrientedBox(2, 3, 6, 3, 0.4)
        assert iou_oracle_mc(b, b, 10000, seed=1) == 1.0

    def test_disjoint(self):
        assert iou_oracle_mc(OrientedBox(0, 0, 2, 2, 0), OrientedBox(50, 50, 2, 2, 0.3), 10000, 2) == 0.0

    def test_deterministic_for_seed(self):
        a = OrientedBox(0, 0, 5, 3, 0.2)
        b = OrientedBox(1, 1, 4, 4, -0.5)
        assert iou_oracle_mc(a, b, 50000, 9) == iou_oracle_mc(a, b, 50000, 9)

    def test_bad_samples(self):
        with pytest.raises(ValueError):
            iou_oracle_mc(OrientedBox(0, 0, 1, 1, 0), OrientedBox(0, 0, 1, 1, 0), 0, 0)


class TestContains:
    @given(boxes_st())
    @settings(max_examples=100)
    def test_corners_are_inside_closed_box(self, box):
        for p in corners(box):
            assert contains(box, p, tol=1e-9 * max(1.0, box.w + box.h))


class TestMinAreaEnclosingBox:
    def test_axis_aligned_rectangle(self):
        box = min_area_enclosing_box([(0, 0), (4, 0), (4, 2), (0, 2)])
        assert (box.cx, box.cy) == (2, 1)
        assert box.w == pytest.approx(4)
        assert box.h == pytest.approx(2)
        assert box.theta == pytest.approx(0, abs=1e-12)

    def test_rotated_rectangle_round_trip(self):
        src = OrientedBox(10, 10, 6, 2, math.pi / 6)
        rec = min_area_enclosing_box([(p.x, p.y) for p in corners(src)])
        for got, want in zip(rec.astuple(), src.astuple()):
            assert got == pytest.approx(want, abs=1e-6)

    @given(boxes_st(size_lo=1.0))
    @settings(max_examples=150)
    def test_random_box_round_trip(self, box):
        box = canonicalize(box)
        rec = min_area_enclosing_box([(p.x, p.y) for p in corners(box)])
        assert vertex_sets_equal(rec, box, tol=1e-6 * max(1.0, box.w + box.h))

    def test_encloses_arbitrary_points(self):
        rng = np.random.default_rng(11)
        pts = rng.uniform(-10, 10, size=(12, 2))
        box = min_area_enclosing_box(pts)
        for x, y in pts:
            assert contains(box, Point(float(x), float(y)), tol=1e-9)

    def test_degenerate(self):
        with pytest.raises(InvalidBoxError):
            min_area_enclosing_box([(0, 0), (1, 1), (2, 2), (3, 3)])
