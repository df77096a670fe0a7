"""Pinhole camera model with a rigid camera-to-world pose."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, PoseError

_ORTHO_TOL = 1e-9


@dataclass
class CameraModel:
    """Pinhole intrinsics plus a 4x4 camera-to-world rigid transform.

    Camera convention: +z forward, +x right, +y down, matching image
    coordinates with v growing downward. Pixel (u, v) covers the
    continuous square [u, u+1) x [v, v+1) with its center at
    (u + 0.5, v + 0.5).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        self.pose = np.asarray(self.pose, dtype=np.float64)
        if self.pose.shape != (4, 4):
            raise PoseError(f"pose must be 4x4, got {self.pose.shape}")
        r = self.pose[:3, :3]
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
            raise PoseError("pose rotation is not orthonormal")
        if np.linalg.det(r) < 0:
            raise PoseError("pose rotation is reflective (det < 0)")
        if not np.allclose(self.pose[3], [0, 0, 0, 1]):
            raise PoseError("pose bottom row must be [0, 0, 0, 1]")

    @property
    def rotation(self) -> np.ndarray:
        return self.pose[:3, :3]

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 3) world points into camera coordinates."""
        return (np.asarray(points) - self.position) @ self.rotation

    def project(self, cam_points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project (N, 3) camera-frame points to continuous (u, v) and depth z."""
        cam_points = np.asarray(cam_points)
        z = cam_points[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.fx * cam_points[:, 0] / z + self.cx
            v = self.fy * cam_points[:, 1] / z + self.cy
        return u, v, z

    def pixel_directions(self) -> np.ndarray:
        """Camera-frame ray directions per pixel, z component fixed at 1.

        With this parameterization the ray parameter t equals the z-depth
        of the hit point, which is exactly what depth maps store.
        """
        us = (np.arange(self.width) + 0.5 - self.cx) / self.fx
        vs = (np.arange(self.height) + 0.5 - self.cy) / self.fy
        dirs = np.empty((self.height, self.width, 3))
        dirs[..., 0] = us[None, :]
        dirs[..., 1] = vs[:, None]
        dirs[..., 2] = 1.0
        return dirs


def look_at_pose(eye, target, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """Camera-to-world pose looking from ``eye`` toward ``target``.

    ``up`` is the world up direction. The camera's +y axis (image down)
    is the projection of -up orthogonal to the view direction, and +x
    completes a right-handed frame.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise PoseError("look_at target coincides with eye")
    forward = forward / norm
    down = -np.asarray(up, dtype=np.float64)
    down = down - (down @ forward) * forward
    dn = np.linalg.norm(down)
    if dn < 1e-12:
        raise PoseError("up direction is parallel to the view direction")
    down = down / dn
    right = np.cross(down, forward)
    pose = np.eye(4)
    pose[:3, 0] = right
    pose[:3, 1] = down
    pose[:3, 2] = forward
    pose[:3, 3] = eye
    return pose
