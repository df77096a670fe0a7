"""TSDF fusion of posed depth frames and point-set reconstruction metrics.

Depth frames are integrated into a voxel grid of truncated signed
distances with per-voxel running-average weights; the implied surface
is read back as sub-voxel zero-crossing points along the three axes.
Reconstruction quality compares such point sets by exact nearest
neighbor distances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .camera import CameraModel
from .depthmap import DepthMap
from .errors import InputError, ParameterError, ShapeError

DEFAULT_VOXEL_SIZE = 0.04
DEFAULT_TAU = 0.05
TRUNCATION_VOXELS = 3.0


@dataclass
class TsdfVolume:
    """Axis-aligned voxel grid of truncated signed distances and weights."""

    origin: np.ndarray
    voxel_size: float
    tsdf: np.ndarray
    weight: np.ndarray

    @classmethod
    def create(cls, origin, dims, voxel_size: float = DEFAULT_VOXEL_SIZE) -> "TsdfVolume":
        if voxel_size <= 0:
            raise ParameterError(f"voxel size must be positive, got {voxel_size}")
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims):
            raise ParameterError(f"volume dims must be >= 1, got {dims}")
        return cls(
            origin=np.asarray(origin, dtype=np.float64),
            voxel_size=float(voxel_size),
            tsdf=np.ones(dims),
            weight=np.zeros(dims),
        )

    @classmethod
    def from_bounds(cls, lo, hi, voxel_size: float = DEFAULT_VOXEL_SIZE) -> "TsdfVolume":
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if (hi <= lo).any():
            raise ParameterError(f"empty volume bounds {lo} .. {hi}")
        dims = np.maximum(np.ceil((hi - lo) / voxel_size).astype(int), 1)
        return cls.create(lo, dims, voxel_size)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.tsdf.shape  # type: ignore[return-value]

    def voxel_centers(self) -> np.ndarray:
        """(N, 3) world coordinates of all voxel centers (x-fastest last axis)."""
        grids = np.meshgrid(*[np.arange(d) for d in self.dims], indexing="ij")
        idx = np.stack([g.ravel() for g in grids], axis=1)
        return self.origin + (idx + 0.5) * self.voxel_size


def integrate_frame(
    vol: TsdfVolume, depth: DepthMap, cam: CameraModel, trunc: float | None = None
) -> TsdfVolume:
    """Fuse one posed depth frame into the volume (running average).

    For every voxel that projects to a valid depth pixel, the signed
    distance along the ray is depth - voxel_z; values beyond -trunc are
    occluded and skipped, the rest are clamped to [-1, 1] after dividing
    by trunc.
    """
    if trunc is None:
        trunc = TRUNCATION_VOXELS * vol.voxel_size
    if trunc <= 0:
        raise ParameterError(f"truncation must be positive, got {trunc}")
    if depth.shape != (cam.height, cam.width):
        raise ShapeError(f"depth {depth.shape} does not match camera {cam.height}x{cam.width}")

    centers = vol.voxel_centers()
    cam_pts = cam.world_to_camera(centers)
    u, v, z = cam.project(cam_pts)
    ok = z > 1e-9
    iu = np.floor(u).astype(int)
    iv = np.floor(v).astype(int)
    ok &= (iu >= 0) & (iu < cam.width) & (iv >= 0) & (iv < cam.height)

    sampled = np.zeros(len(centers))
    valid_px = np.zeros(len(centers), dtype=bool)
    sampled[ok] = depth.values[iv[ok], iu[ok]]
    valid_px[ok] = depth.mask[iv[ok], iu[ok]]

    sdf = sampled - z
    update = ok & valid_px & (sdf > -trunc)
    new_tsdf = np.clip(sdf[update] / trunc, -1.0, 1.0)

    flat_t = vol.tsdf.reshape(-1)
    flat_w = vol.weight.reshape(-1)
    w_old = flat_w[update]
    blended = np.where(w_old > 0, (flat_t[update] * w_old + new_tsdf) / (w_old + 1.0), new_tsdf)
    flat_t[update] = blended
    flat_w[update] = w_old + 1.0
    return vol


def extract_points(vol: TsdfVolume) -> np.ndarray:
    """Sub-voxel surface points at tsdf sign changes along each axis.

    Both sides of a crossing must carry weight. Returns an (N, 3) array,
    empty when the volume holds no surface.
    """
    points = []
    t = vol.tsdf
    w = vol.weight
    for axis in range(3):
        a = np.moveaxis(t, axis, 0)[:-1]
        b = np.moveaxis(t, axis, 0)[1:]
        wa = np.moveaxis(w, axis, 0)[:-1]
        wb = np.moveaxis(w, axis, 0)[1:]
        crossing = ((a > 0) != (b > 0)) & (wa > 0) & (wb > 0)
        if not crossing.any():
            continue
        idx = np.argwhere(crossing)
        av = a[crossing]
        bv = b[crossing]
        frac = av / (av - bv)
        coords = idx.astype(np.float64)
        # argwhere indexes the moved layout: column 0 is the scan axis
        order = [axis] + [ax for ax in range(3) if ax != axis]
        unmoved = np.empty_like(coords)
        for col, ax in enumerate(order):
            unmoved[:, ax] = coords[:, col]
        unmoved[:, axis] += frac
        points.append(vol.origin + (unmoved + 0.5) * vol.voxel_size)
    if not points:
        return np.empty((0, 3))
    return np.concatenate(points, axis=0)


@dataclass(frozen=True)
class ReconMetrics:
    acc: float
    comp: float
    prec: float
    recall: float
    fscore: float

    def as_dict(self) -> dict[str, float]:
        return {
            "acc": self.acc,
            "comp": self.comp,
            "prec": self.prec,
            "recall": self.recall,
            "fscore": self.fscore,
        }


def recon_metrics(points: np.ndarray, reference: np.ndarray, tau: float = DEFAULT_TAU) -> ReconMetrics:
    """Accuracy/completeness distances plus tau-thresholded precision,
    recall, and their harmonic mean."""
    points = np.asarray(points, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) == 0:
        raise InputError(f"predicted point set is empty or malformed: shape {points.shape}")
    if reference.ndim != 2 or reference.shape[1] != 3 or len(reference) == 0:
        raise InputError(f"reference point set is empty or malformed: shape {reference.shape}")
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    d_pred, _ = cKDTree(reference).query(points)
    d_ref, _ = cKDTree(points).query(reference)
    prec = float((d_pred < tau).mean())
    recall = float((d_ref < tau).mean())
    fscore = 0.0 if prec + recall == 0 else 2.0 * prec * recall / (prec + recall)
    return ReconMetrics(
        acc=float(d_pred.mean()),
        comp=float(d_ref.mean()),
        prec=prec,
        recall=recall,
        fscore=fscore,
    )
