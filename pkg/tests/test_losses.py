import math

import numpy as np
import pytest

from obbkit.assignment import NEGATIVE, POSITIVE, AssignmentResult
from obbkit.losses import ClmLevelBatch, LossConfig, clm_loss, focal_loss, smooth_l1


def make_assign(labels):
    labels = np.asarray(labels, dtype=np.int8)
    matched = np.where(labels == POSITIVE, 0, -1).astype(np.int64)
    return AssignmentResult(labels=labels, matched_gt=matched)


class TestFocalLoss:
    def test_confident_correct_goes_to_zero(self):
        v, _ = focal_loss(1 - 1e-7, 1)
        assert v < 1e-11

    def test_hand_worked_value(self):
        v, _ = focal_loss(0.5, 1, gamma=2.0, alpha_f=0.25)
        assert v == pytest.approx(0.25 * 0.25 * math.log(2.0), abs=1e-9)
        assert v == pytest.approx(0.04332, abs=1e-5)

    def test_negative_branch(self):
        v, _ = focal_loss(0.5, 0, gamma=2.0, alpha_f=0.25)
        assert v == pytest.approx(0.75 * 0.25 * math.log(2.0), abs=1e-9)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        h = 1e-5
        for i in range(100):
            p = float(rng.uniform(0.05, 0.95))
            y = int(rng.integers(0, 2))
            _, grad = focal_loss(p, y)
            num = (focal_loss(p + h, y)[0] - focal_loss(p - h, y)[0]) / (2 * h)
            assert grad == pytest.approx(num, rel=1e-5, abs=1e-8)

    def test_out_of_range_probability_clamped(self):
        v, _ = focal_loss(1.5, 1)
        assert math.isfinite(v)
        v, _ = focal_loss(-0.2, 0)
        assert math.isfinite(v)

    def test_bad_label(self):
        with pytest.raises(ValueError):
            focal_loss(0.5, 2)


class TestSmoothL1:
    def test_zero_at_match(self):
        assert smooth_l1(3.0, 3.0)[0] == 0.0

    def test_quadratic_region(self):
        v, g = smooth_l1(0.5, 0.0, beta=1.0)
        assert v == pytest.approx(0.125, abs=1e-12)
        assert g == pytest.approx(0.5, abs=1e-12)

    def test_linear_region(self):
        v, g = smooth_l1(2.0, 0.0, beta=1.0)
        assert v == pytest.approx(1.5, abs=1e-12)
        assert g == 1.0

    def test_continuity_at_kink(self):
        eps = 1e-9
        below = smooth_l1(1.0 - eps, 0.0)[0]
        above = smooth_l1(1.0 + eps, 0.0)[0]
        assert below == pytest.approx(above, abs=1e-8)
        assert smooth_l1(1.0 - eps, 0.0)[1] == pytest.approx(smooth_l1(1.0 + eps, 0.0)[1], abs=1e-8)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        h = 1e-5
        for _ in range(100):
            d = float(rng.uniform(-3, 3))
            if abs(abs(d) - 1.0) < 1e-3:  # keep away from the kink
                continue
            _, grad = smooth_l1(d, 0.0)
            num = (smooth_l1(d + h, 0.0)[0] - smooth_l1(d - h, 0.0)[0]) / (2 * h)
            assert grad == pytest.approx(num, rel=1e-5, abs=1e-8)


def toy_batch(scores, labels, dist_preds, dist_targets, angle_preds, angle_targets):
    return ClmLevelBatch(
        scores=np.asarray(scores, dtype=np.float64),
        dist_preds=np.asarray(dist_preds, dtype=np.float64),
        angle_preds=np.asarray(angle_preds, dtype=np.float64),
        assign=make_assign(labels),
        dist_targets=np.asarray(dist_targets, dtype=np.float64),
        angle_targets=np.asarray(angle_targets, dtype=np.float64),
    )


class TestClmLoss:
    def test_all_negative_has_no_regression_terms(self):
        batch = toy_batch(
            scores=[1e-6, 1e-6, 1e-6],
            labels=[NEGATIVE] * 3,
            dist_preds=np.zeros((3, 4)),
            dist_targets=np.full((3, 4), np.nan),
            angle_preds=np.zeros(3),
            angle_targets=np.full(3, np.nan),
        )
        bd = clm_loss([batch], LossConfig())
        assert bd.dist == 0.0
        assert bd.angle == 0.0
        assert bd.n_pos == 0
        assert bd.total == pytest.approx(bd.ctr / 3.0, abs=1e-15)

    def test_exact_predictions_zero_regression(self):
        t = np.array([[0.1, -0.2, 0.3, 0.0]])
        batch = toy_batch(
            scores=[0.9],
            labels=[POSITIVE],
            dist_preds=t,
            dist_targets=t,
            angle_preds=[0.2],
            angle_targets=[0.2],
        )
        bd = clm_loss([batch], LossConfig())
        assert bd.dist == 0.0
        assert bd.angle == 0.0

    def test_three_point_fixture_matches_scalar_recomputation(self):
        cfg = LossConfig(lam=1.0, focal_gamma=2.0, focal_alpha=0.25, smooth_l1_beta=1.0)
        scores = [0.8, 0.3, 0.6]
        labels = [POSITIVE, NEGATIVE, POSITIVE]
        dist_preds = [[0.1, 0.2, -0.1, 0.0], [0.0, 0.0, 0.0, 0.0], [1.5, -0.4, 0.2, 0.3]]
        dist_targets = [[0.0, 0.0, 0.0, 0.0], [np.nan] * 4, [0.1, 0.1, 0.1, 0.1]]
        angle_preds = [0.35, 0.0, -0.6]
        angle_targets = [0.3, np.nan, 0.7]
        bd = clm_loss(
            [toy_batch(scores, labels, dist_preds, dist_targets, angle_preds, angle_targets)],
            cfg,
        )

        # independent scalar recomputation
        def focal(p, y):
            p = min(max(p, 1e-6), 1 - 1e-6)
            if y == 1:
                return -0.25 * (1 - p) ** 2 * math.log(p)
            return -0.75 * p**2 * math.log(1 - p)

        def sl1(d):
            return d * d / 2 if abs(d) < 1 else abs(d) - 0.5

        ctr = focal(0.8, 1) + focal(0.3, 0) + focal(0.6, 1)
        dist = sum(sl1(a - b) for a, b in zip(dist_preds[0], dist_targets[0]))
        dist += sum(sl1(a - b) for a, b in zip(dist_preds[2], dist_targets[2]))
        ang = sl1(0.35 - 0.3) + sl1(-0.6 - 0.7)
        total = ctr / 3 + dist / 2 + ang / 2
        assert bd.ctr == pytest.approx(ctr, abs=1e-9)
        assert bd.dist == pytest.approx(dist, abs=1e-9)
        assert bd.angle == pytest.approx(ang, abs=1e-9)
        assert bd.total == pytest.approx(total, abs=1e-9)
        assert bd.n_points == 3
        assert bd.n_pos == 2

    def test_missing_target_at_positive_raises(self):
        batch = toy_batch(
            scores=[0.9],
            labels=[POSITIVE],
            dist_preds=np.zeros((1, 4)),
            dist_targets=np.full((1, 4), np.nan),
            angle_preds=[0.0],
            angle_targets=[0.0],
        )
        with pytest.raises(ValueError):
            clm_loss([batch], LossConfig())

    def test_doubling_points_halves_ctr_share(self):
        base = toy_batch(
            scores=[0.7, 0.4],
            labels=[NEGATIVE, NEGATIVE],
            dist_preds=np.zeros((2, 4)),
            dist_targets=np.full((2, 4), np.nan),
            angle_preds=np.zeros(2),
            angle_targets=np.full(2, np.nan),
        )
        extra = toy_batch(
            scores=[1e-6, 1e-6],
            labels=[NEGATIVE, NEGATIVE],
            dist_preds=np.zeros((2, 4)),
            dist_targets=np.full((2, 4), np.nan),
            angle_preds=np.zeros(2),
            angle_targets=np.full(2, np.nan),
        )
        a = clm_loss([base], LossConfig())
        b = clm_loss([base, extra], LossConfig())
        # the two original points' averaged contribution halves (up to the
        # negligible focal loss of the near-zero extra scores)
        assert b.total == pytest.approx(a.total / 2, rel=1e-6)

    def test_negative_point_predictions_do_not_touch_regression(self):
        rng = np.random.default_rng(2)
        t = np.array([[0.1, 0.2, 0.3, 0.4]])
        common = dict(
            scores=[0.9, 0.2],
            labels=[POSITIVE, NEGATIVE],
            dist_targets=np.vstack([t, np.full((1, 4), np.nan)]),
            angle_targets=[0.1, np.nan],
        )
        a = clm_loss(
            [toy_batch(dist_preds=np.vstack([t, np.zeros((1, 4))]), angle_preds=[0.1, 0.0], **common)],
            LossConfig(),
        )
        b = clm_loss(
            [
                toy_batch(
                    dist_preds=np.vstack([t, rng.normal(size=(1, 4))]),
                    angle_preds=[0.1, 5.0],
                    **common,
                )
            ],
            LossConfig(),
        )
        assert a.dist == b.dist
        assert a.angle == b.angle

    def test_multi_level_counts(self):
        b1 = toy_batch(
            scores=[0.9],
            labels=[POSITIVE],
            dist_preds=np.zeros((1, 4)),
            dist_targets=np.zeros((1, 4)),
            angle_preds=[0.0],
            angle_targets=[0.0],
        )
        b2 = toy_batch(
            scores=[0.1, 0.1, 0.1],
            labels=[NEGATIVE] * 3,
            dist_preds=np.zeros((3, 4)),
            dist_targets=np.full((3, 4), np.nan),
            angle_preds=np.zeros(3),
            angle_targets=np.full(3, np.nan),
        )
        bd = clm_loss([b1, b2], LossConfig())
        assert bd.n_points == 4
        assert bd.n_pos == 1
