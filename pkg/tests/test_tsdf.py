import numpy as np
import pytest

from promptdepth.camera import CameraModel, look_at_pose
from promptdepth.depthmap import DepthMap
from promptdepth.errors import InputError, PoseError
from promptdepth.tsdf import (
    ReconMetrics,
    TsdfVolume,
    extract_points,
    integrate_frame,
    recon_metrics,
)


def frontal_camera(width=64, height=64, fx=50.0):
    return CameraModel(fx=fx, fy=fx, cx=width / 2, cy=height / 2, width=width, height=height)


def plane_volume():
    return TsdfVolume.from_bounds([-0.3, -0.3, 0.6], [0.3, 0.3, 1.4], voxel_size=0.04)


class TestIntegrate:
    def test_empty_depth_leaves_volume_unchanged(self):
        vol = plane_volume()
        cam = frontal_camera()
        depth = DepthMap(np.zeros((64, 64)))  # all invalid
        integrate_frame(vol, depth, cam)
        np.testing.assert_array_equal(vol.tsdf, np.ones(vol.dims))
        np.testing.assert_array_equal(vol.weight, np.zeros(vol.dims))

    def test_double_integration_is_running_average_fixed_point(self):
        cam = frontal_camera()
        depth = DepthMap(np.full((64, 64), 1.0))
        once = plane_volume()
        integrate_frame(once, depth, cam)
        twice = plane_volume()
        integrate_frame(twice, depth, cam)
        integrate_frame(twice, depth, cam)
        np.testing.assert_allclose(twice.tsdf, once.tsdf, atol=1e-12)
        np.testing.assert_array_equal(twice.weight, 2.0 * once.weight)

    def test_frontal_plane_zero_crossings(self):
        vol = plane_volume()
        integrate_frame(vol, DepthMap(np.full((64, 64), 1.0)), frontal_camera())
        pts = extract_points(vol)
        assert len(pts) > 0
        assert np.abs(pts[:, 2] - 1.0).max() <= vol.voxel_size / 2

    def test_mismatched_depth_rejected(self):
        from promptdepth.errors import ShapeError

        with pytest.raises(ShapeError):
            integrate_frame(plane_volume(), DepthMap(np.ones((32, 32))), frontal_camera())

    def test_non_rigid_pose_rejected(self):
        pose = np.eye(4)
        pose[0, 0] = 2.0
        with pytest.raises(PoseError):
            CameraModel(fx=50, fy=50, cx=32, cy=32, width=64, height=64, pose=pose)

    def test_order_invariance(self):
        cam1 = frontal_camera()
        pose2 = look_at_pose([0.05, -0.02, 0.0], [0.0, 0.0, 1.0])
        cam2 = CameraModel(fx=50, fy=50, cx=32, cy=32, width=64, height=64, pose=pose2)
        d1 = DepthMap(np.full((64, 64), 1.0))
        d2 = DepthMap(np.full((64, 64), 1.05))

        a = plane_volume()
        integrate_frame(a, d1, cam1)
        integrate_frame(a, d2, cam2)
        b = plane_volume()
        integrate_frame(b, d2, cam2)
        integrate_frame(b, d1, cam1)
        np.testing.assert_allclose(a.tsdf, b.tsdf, atol=1e-10)


class TestExtractPoints:
    def test_no_surface_gives_empty_set(self):
        vol = TsdfVolume.create([0, 0, 0], (4, 4, 4))
        vol.weight[:] = 1.0
        assert len(extract_points(vol)) == 0

    def test_handcrafted_two_planes_cluster(self):
        vol = TsdfVolume.create([0, 0, 0], (4, 4, 12), voxel_size=0.1)
        vol.weight[:] = 1.0
        z = (np.arange(12) + 0.5) * 0.1
        # negative slab between z=0.4 and z=0.8: two crossings along z
        sign = np.where((z > 0.4) & (z < 0.8), -1.0, 1.0)
        vol.tsdf[:] = sign[None, None, :]
        pts = extract_points(vol)
        zs = np.sort(np.unique(np.round(pts[:, 2], 6)))
        assert len(zs) == 2
        assert abs(zs[0] - 0.4) <= 0.05 and abs(zs[1] - 0.8) <= 0.05

    def test_weightless_crossings_ignored(self):
        vol = TsdfVolume.create([0, 0, 0], (2, 2, 4))
        vol.tsdf[:, :, 2:] = -1.0
        assert len(extract_points(vol)) == 0


def plane_points(z=0.0, n=40, extent=1.0):
    xs = np.linspace(0, extent, n)
    xx, yy = np.meshgrid(xs, xs)
    return np.stack([xx.ravel(), yy.ravel(), np.full(n * n, z)], axis=1)


class TestReconMetrics:
    def test_identical_sets(self):
        p = plane_points()
        m = recon_metrics(p, p.copy())
        assert (m.acc, m.comp, m.prec, m.recall, m.fscore) == (0.0, 0.0, 1.0, 1.0, 1.0)

    def test_small_shift_within_tau(self):
        p = plane_points(z=0.0)
        q = plane_points(z=0.03)
        m = recon_metrics(p, q, tau=0.05)
        assert m.prec == 1.0 and m.recall == 1.0 and m.fscore == 1.0
        assert m.acc == pytest.approx(0.03, abs=1e-12)
        assert m.comp == pytest.approx(0.03, abs=1e-12)

    def test_large_shift_beyond_tau(self):
        m = recon_metrics(plane_points(z=0.0), plane_points(z=0.10), tau=0.05)
        assert m.prec == 0.0 and m.recall == 0.0 and m.fscore == 0.0
        assert m.acc == pytest.approx(0.10, abs=1e-12)

    def test_symmetry_acc_comp(self):
        rng = np.random.default_rng(0)
        p = rng.uniform(0, 1, (50, 3))
        q = rng.uniform(0, 1, (70, 3))
        a = recon_metrics(p, q)
        b = recon_metrics(q, p)
        assert a.acc == pytest.approx(b.comp, abs=1e-15)
        assert a.comp == pytest.approx(b.acc, abs=1e-15)

    def test_fscore_formula(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(0, 1, (40, 3))
        q = rng.uniform(0, 1, (40, 3))
        m = recon_metrics(p, q, tau=0.2)
        if m.prec + m.recall > 0:
            assert m.fscore == pytest.approx(2 * m.prec * m.recall / (m.prec + m.recall), abs=1e-12)

    def test_empty_sets_rejected(self):
        p = plane_points()
        with pytest.raises(InputError):
            recon_metrics(np.empty((0, 3)), p)
        with pytest.raises(InputError):
            recon_metrics(p, np.empty((0, 3)))

    def test_matches_brute_force_reference(self):
        rng = np.random.default_rng(2)
        p = rng.uniform(0, 1, (30, 3))
        q = rng.uniform(0, 1, (25, 3))
        m = recon_metrics(p, q, tau=0.15)
        d_pq = np.array([min(np.linalg.norm(a - b) for b in q) for a in p])
        d_qp = np.array([min(np.linalg.norm(b - a) for a in p) for b in q])
        assert m.acc == pytest.approx(d_pq.mean(), abs=1e-12)
        assert m.comp == pytest.approx(d_qp.mean(), abs=1e-12)
        assert m.prec == pytest.approx((d_pq < 0.15).mean(), abs=1e-12)
        assert m.recall == pytest.approx((d_qp < 0.15).mean(), abs=1e-12)
