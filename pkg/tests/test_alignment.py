import numpy as np
import pytest

from promptdepth.alignment import (
    DELTA_THRESHOLD,
    DepthMetrics,
    ScaleShift,
    depth_metrics,
    polyfit_align,
    ransac_scale_shift,
)
from promptdepth.depthmap import DepthMap
from promptdepth.errors import AlignmentError, InputError


def corrupted_pair(seed, scale=2.0, shift=0.1, outlier_frac=0.2, n=600):
    """Exact affine pair with a fraction of pixels replaced by garbage."""
    rng = np.random.default_rng(seed)
    pred = rng.uniform(0.5, 4.0, n)
    ref = scale * pred + shift
    n_out = int(outlier_frac * n)
    bad = rng.choice(n, size=n_out, replace=False)
    ref = ref.copy()
    ref[bad] = rng.uniform(0.0, 30.0, n_out)
    inlier_mask = np.ones(n, bool)
    inlier_mask[bad] = False
    return pred.reshape(20, -1), ref.reshape(20, -1), inlier_mask.reshape(20, -1)


class TestRansac:
    def test_exact_recovery_on_clean_data(self):
        rng = np.random.default_rng(0)
        pred = rng.uniform(0.5, 3.0, (10, 10))
        ref = 1.7 * pred + 0.3
        fit = ransac_scale_shift(pred, ref, seed=1)
        assert abs(fit.scale - 1.7) < 1e-9
        assert abs(fit.shift - 0.3) < 1e-9
        assert fit.inlier_count == 100

    def test_identity_when_equal(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(1, 2, (8, 8))
        fit = ransac_scale_shift(pred, pred, seed=0)
        assert abs(fit.scale - 1.0) < 1e-9
        assert abs(fit.shift) < 1e-9

    def test_recovers_under_gross_outliers(self):
        pred, ref, _ = corrupted_pair(seed=2)
        fit = ransac_scale_shift(pred, ref, seed=3)
        assert abs(fit.scale - 2.0) < 1e-3
        assert abs(fit.shift - 0.1) < 1e-3

    def test_constant_prediction_rejected(self):
        with pytest.raises(AlignmentError):
            ransac_scale_shift(np.ones((5, 5)), np.random.default_rng(0).uniform(1, 2, (5, 5)))

    def test_breakdown_robustness_sample(self):
        for seed in range(10):
            pred, ref, _ = corrupted_pair(seed=seed, outlier_frac=0.3)
            fit = ransac_scale_shift(pred, ref, seed=seed + 100)
            assert abs(fit.scale - 2.0) / 2.0 < 0.01

    def test_respects_masks(self):
        rng = np.random.default_rng(4)
        pred = rng.uniform(1, 2, (6, 6))
        ref = 3.0 * pred - 0.2
        ref_bad = ref.copy()
        ref_bad[0] = 99.0
        mask = np.ones((6, 6), bool)
        mask[0] = False
        fit = ransac_scale_shift(pred, ref_bad, mask=mask, seed=0)
        assert abs(fit.scale - 3.0) < 1e-9


class TestPolyfit:
    def test_exact_affine_recovery(self):
        rng = np.random.default_rng(5)
        pred = rng.uniform(0.5, 2.0, (7, 7))
        ref = 0.8 * pred + 1.1
        fit = polyfit_align(pred, ref)
        assert abs(fit.scale - 0.8) < 1e-12
        assert abs(fit.shift - 1.1) < 1e-12

    def test_two_pixels_interpolated_exactly(self):
        pred = np.array([[1.0, 3.0]])
        ref = np.array([[2.0, 8.0]])
        fit = polyfit_align(pred, ref)
        np.testing.assert_allclose(fit.apply(pred), ref, atol=1e-12)

    def test_worse_than_ransac_under_outliers(self):
        for seed in range(5):
            pred, ref, inliers = corrupted_pair(seed=seed)
            robust = ransac_scale_shift(pred, ref, seed=seed)
            plain = polyfit_align(pred, ref)
            r_res = np.abs(robust.apply(pred) - ref)[inliers].mean()
            p_res = np.abs(plain.apply(pred) - ref)[inliers].mean()
            assert r_res < p_res

    def test_too_few_pixels_rejected(self):
        with pytest.raises(InputError):
            polyfit_align(np.array([[1.0]]), np.array([[2.0]]))


def brute_force_depth_metrics(pred, gt):
    n = pred.size
    l1 = sum(abs(g - p) for p, g in zip(pred.flat, gt.flat)) / n
    rmse = (sum((g - p) ** 2 for p, g in zip(pred.flat, gt.flat)) / n) ** 0.5
    absrel = sum(abs(g - p) / g for p, g in zip(pred.flat, gt.flat)) / n
    delta = sum(1.0 for p, g in zip(pred.flat, gt.flat) if max(g / p, p / g) < 1.25**0.5) / n
    return l1, rmse, absrel, delta


class TestDepthMetrics:
    def test_perfect_prediction(self):
        gt = np.random.default_rng(6).uniform(1, 4, (5, 5))
        m = depth_metrics(gt.copy(), gt)
        assert (m.l1, m.rmse, m.absrel, m.delta05) == (0.0, 0.0, 0.0, 1.0)

    def test_hand_example(self):
        m = depth_metrics(np.array([[1.2, 0.9]]), np.array([[1.0, 1.0]]))
        assert m.l1 == pytest.approx(0.15, abs=1e-12)
        assert m.rmse == pytest.approx(np.sqrt(0.025), abs=1e-12)
        assert m.absrel == pytest.approx(0.15, abs=1e-12)
        assert m.delta05 == pytest.approx(0.5, abs=1e-12)

    def test_scale_invariance_of_ratio_metrics(self):
        rng = np.random.default_rng(7)
        gt = rng.uniform(1, 3, (6, 6))
        pred = gt * rng.uniform(0.9, 1.1, (6, 6))
        a = depth_metrics(pred, gt)
        b = depth_metrics(3.7 * pred, 3.7 * gt)
        assert a.absrel == pytest.approx(b.absrel, abs=1e-12)
        assert a.delta05 == b.delta05

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            gt = rng.uniform(0.5, 5.0, (4, 6))
            pred = gt + rng.normal(0, 0.3, (4, 6))
            pred = np.abs(pred) + 0.05
            m = depth_metrics(pred, gt)
            l1, rmse, absrel, delta = brute_force_depth_metrics(pred, gt)
            assert m.l1 == pytest.approx(l1, abs=1e-12)
            assert m.rmse == pytest.approx(rmse, abs=1e-12)
            assert m.absrel == pytest.approx(absrel, abs=1e-12)
            assert m.delta05 == pytest.approx(delta, abs=1e-12)

    def test_threshold_literal(self):
        assert DELTA_THRESHOLD == 1.25**0.5

    def test_empty_mask_rejected(self):
        with pytest.raises(InputError):
            depth_metrics(np.ones((2, 2)), np.ones((2, 2)), mask=np.zeros((2, 2), bool))

    def test_nonpositive_gt_rejected(self):
        with pytest.raises(InputError):
            depth_metrics(np.ones((2, 2)), np.zeros((2, 2)))

    def test_depthmap_masks_honored(self):
        gt = DepthMap(np.array([[1.0, 0.0], [2.0, 3.0]]))
        pred = np.array([[1.1, 9.0], [2.0, 3.0]])
        m = depth_metrics(pred, gt)
        assert m.l1 == pytest.approx(0.1 / 3, abs=1e-12)
