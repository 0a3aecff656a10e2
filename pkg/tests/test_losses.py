import math

import numpy as np
import pytest

from sohem import (
    BBox,
    BothWeightsZero,
    DegenerateBox,
    DomainError,
    OffsetVector,
    box_to_offsets,
    iou,
    loc_loss,
    log_loss,
    offsets_to_box,
    selection_score,
    smooth_l1,
    smooth_l1_inverse,
)

from conftest import iou_reference


class TestLogLoss:
    def test_base10_examples(self):
        assert log_loss(0.615, base="base10") == pytest.approx(0.211, abs=0.002)
        assert log_loss(0.646, base="base10") == pytest.approx(0.190, abs=0.002)

    def test_perfect_prediction(self):
        assert log_loss(1.0) == 0.0

    def test_natural_half(self):
        assert log_loss(0.5) == pytest.approx(math.log(2), abs=1e-4)

    def test_natural_is_default(self):
        assert log_loss(0.3) == log_loss(0.3, base="natural")

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.0001, 2.0])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            log_loss(bad)

    def test_unknown_base(self):
        with pytest.raises(ValueError):
            log_loss(0.5, base="base2")

    def test_strictly_decreasing(self):
        grid = np.linspace(1e-6, 1.0, 500)
        values = [log_loss(float(p)) for p in grid]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestSmoothL1:
    @pytest.mark.parametrize(
        "x, expected", [(0.0, 0.0), (0.5, 0.125), (2.0, 1.5), (-0.5, 0.125), (-2.0, 1.5)]
    )
    def test_closed_forms(self, x, expected):
        assert smooth_l1(x) == pytest.approx(expected, abs=1e-12)

    def test_continuous_and_smooth_at_one(self):
        eps = 1e-6
        assert smooth_l1(1.0 - eps) == pytest.approx(smooth_l1(1.0 + eps), abs=1e-4)
        # one-sided difference quotients agree: derivative is 1 on both sides
        left = (smooth_l1(1.0) - smooth_l1(1.0 - eps)) / eps
        right = (smooth_l1(1.0 + eps) - smooth_l1(1.0)) / eps
        assert left == pytest.approx(right, abs=1e-4)
        assert left == pytest.approx(1.0, abs=1e-4)


class TestSmoothL1Inverse:
    def test_small_gap_example(self):
        assert smooth_l1_inverse(0.01) == pytest.approx(0.1414, abs=1e-3)

    def test_zero(self):
        assert smooth_l1_inverse(0.0) == 0.0

    def test_transition_point(self):
        assert smooth_l1_inverse(0.125) == pytest.approx(0.5, abs=1e-12)

    def test_round_trip_grid(self):
        for x in np.linspace(0.0, 5.0, 10_000):
            assert smooth_l1_inverse(smooth_l1(float(x))) == pytest.approx(float(x), abs=1e-9)

    def test_negative_loss_rejected(self):
        with pytest.raises(ValueError):
            smooth_l1_inverse(-0.01)


class TestLocLoss:
    def test_identical(self):
        v = OffsetVector(0.1, -0.2, 0.3, 0.0)
        assert loc_loss(v, v) == 0.0

    def test_single_coordinate(self):
        pred = OffsetVector(0.1, 0.0, 0.0, 0.0)
        target = OffsetVector(0.0, 0.0, 0.0, 0.0)
        assert loc_loss(pred, target) == pytest.approx(0.005, abs=1e-12)

    def test_sums_over_coordinates(self):
        pred = OffsetVector(0.5, 0.5, 0.5, 0.5)
        target = OffsetVector(0.0, 0.0, 0.0, 0.0)
        assert loc_loss(pred, target) == pytest.approx(0.5, abs=1e-12)
        total = sum(smooth_l1(0.5) for _ in range(4))
        assert loc_loss(pred, target) == pytest.approx(total, abs=1e-12)


class TestBoxOffsets:
    def test_identity(self, rng):
        for _ in range(100):
            x1, y1 = rng.uniform(-50, 50, 2)
            w, h = rng.uniform(0.5, 30, 2)
            box = BBox(x1, y1, x1 + w, y1 + h)
            t = box_to_offsets(box, box)
            assert t.as_tuple() == (0.0, 0.0, 0.0, 0.0)

    def test_width_doubled(self):
        anchor = BBox(0.0, 0.0, 10.0, 10.0)
        box = BBox(-5.0, 0.0, 15.0, 10.0)
        t = box_to_offsets(box, anchor)
        assert t.t_x == pytest.approx(0.0, abs=1e-12)
        assert t.t_w == pytest.approx(math.log(2), abs=1e-12)
        assert t.t_y == 0.0 and t.t_h == 0.0

    def test_shift_right_half_width(self):
        anchor = BBox(0.0, 0.0, 10.0, 10.0)
        box = BBox(5.0, 0.0, 15.0, 10.0)
        t = box_to_offsets(box, anchor)
        assert t.t_x == pytest.approx(0.5, abs=1e-12)
        assert t.t_y == 0.0 and t.t_w == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_inputs(self):
        flat = BBox(0.0, 0.0, 0.0, 10.0)
        good = BBox(0.0, 0.0, 10.0, 10.0)
        with pytest.raises(DegenerateBox):
            box_to_offsets(flat, good)
        with pytest.raises(DegenerateBox):
            box_to_offsets(good, flat)

    def test_round_trip(self, rng):
        for _ in range(200):
            ax1, ay1 = rng.uniform(-20, 20, 2)
            aw, ah = rng.uniform(1.0, 25.0, 2)
            bx1, by1 = rng.uniform(-20, 20, 2)
            bw, bh = rng.uniform(1.0, 25.0, 2)
            anchor = BBox(ax1, ay1, ax1 + aw, ay1 + ah)
            box = BBox(bx1, by1, bx1 + bw, by1 + bh)
            back = offsets_to_box(anchor, box_to_offsets(box, anchor))
            assert back.as_tuple() == pytest.approx(box.as_tuple(), abs=1e-9)


class TestIou:
    def test_identical(self):
        box = BBox(1.0, 2.0, 4.0, 6.0)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)) == 0.0

    def test_known_third(self):
        assert iou(BBox(0, 0, 2, 2), BBox(1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-9)

    def test_against_raster_oracle(self, rng):
        # rasterized area on a fine grid, fully independent of the formula
        for _ in range(20):
            a = np.sort(rng.uniform(0, 10, 2)).tolist() + np.sort(rng.uniform(0, 10, 2)).tolist()
            b = np.sort(rng.uniform(0, 10, 2)).tolist() + np.sort(rng.uniform(0, 10, 2)).tolist()
            box_a = BBox(a[0], a[2], a[1] + 0.5, a[3] + 0.5)
            box_b = BBox(b[0], b[2], b[1] + 0.5, b[3] + 0.5)
            xs = np.linspace(-1, 12, 650)
            ys = np.linspace(-1, 12, 650)
            gx, gy = np.meshgrid(xs, ys)
            in_a = (gx >= box_a.x1) & (gx < box_a.x2) & (gy >= box_a.y1) & (gy < box_a.y2)
            in_b = (gx >= box_b.x1) & (gx < box_b.x2) & (gy >= box_b.y1) & (gy < box_b.y2)
            union = np.count_nonzero(in_a | in_b)
            expected = np.count_nonzero(in_a & in_b) / union if union else 0.0
            assert iou(box_a, box_b) == pytest.approx(expected, abs=5e-3)

    def test_symmetry(self, rng):
        for _ in range(10_000):
            x = rng.uniform(0, 10, 8)
            a = BBox(x[0], x[1], x[0] + x[2] + 0.1, x[1] + x[3] + 0.1)
            b = BBox(x[4], x[5], x[4] + x[6] + 0.1, x[5] + x[7] + 0.1)
            assert iou(a, b) == iou(b, a)


class TestSelectionScore:
    def test_cls_only(self):
        assert selection_score(0.21, 0.11, 1.0, 0.0) == pytest.approx(0.21)

    def test_worked_example_equal_weights(self):
        score_a = selection_score(0.21, 0.11, 1.0, 1.0)
        score_b = selection_score(0.19, 0.12, 1.0, 1.0)
        assert score_a == pytest.approx(0.32, abs=1e-12)
        assert score_b == pytest.approx(0.31, abs=1e-12)
        assert score_a > score_b

    def test_worked_example_loc_only(self):
        score_a = selection_score(0.21, 0.11, 0.0, 1.0)
        score_b = selection_score(0.19, 0.12, 0.0, 1.0)
        assert (score_a, score_b) == (0.11, 0.12)
        assert score_b > score_a

    def test_both_zero(self):
        with pytest.raises(BothWeightsZero):
            selection_score(0.1, 0.1, 0.0, 0.0)

    def test_ranking_invariance_under_scaling(self, rng):
        for _ in range(50):
            pairs = rng.uniform(0, 2, (30, 2))
            alpha, beta = rng.uniform(0.1, 3, 2)
            base = np.argsort([-selection_score(c, l, alpha, beta) for c, l in pairs],
                              kind="stable")
            for c in (0.1, 3.0, 100.0):
                scaled = np.argsort(
                    [-selection_score(lc, ll, c * alpha, c * beta) for lc, ll in pairs],
                    kind="stable",
                )
                assert np.array_equal(base, scaled)


def test_reference_iou_agrees_with_package(rng):
    # ties the shared test oracle to the tested implementation once
    for _ in range(500):
        x = rng.uniform(0, 10, 8)
        a = BBox(x[0], x[1], x[0] + x[2] + 0.1, x[1] + x[3] + 0.1)
        b = BBox(x[4], x[5], x[4] + x[6] + 0.1, x[5] + x[7] + 0.1)
        assert iou(a, b) == pytest.approx(iou_reference(a.as_tuple(), b.as_tuple()), abs=1e-12)
