"""Procedural room scenes with exact ray-cast RGB-D rendering.

A scene is a hollow room (five one-sided axis-aligned planes) holding a
few axis-aligned boxes, each surface with its own albedo. Rendering
casts one ray per pixel, takes the first hit, and shades with a fixed
directional light so that color edges coincide with geometry edges.
Depth is the camera-frame z of the hit, background pixels are invalid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraModel, look_at_pose
from .depthmap import DepthMap
from .errors import PoseError

_LIGHT = np.array([0.35, -0.8, 0.47])
_LIGHT = _LIGHT / np.linalg.norm(_LIGHT)
_EPS = 1e-9


@dataclass(frozen=True)
class Plane:
    """One-sided axis-aligned plane; normal points along +-axis."""

    axis: int
    offset: float
    normal_sign: float
    albedo: tuple[float, float, float]


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    albedo: tuple[float, float, float]

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point)
        return bool(
            np.all(p >= np.asarray(self.lo) - margin) and np.all(p <= np.asarray(self.hi) + margin)
        )


@dataclass(frozen=True)
class Scene:
    planes: tuple[Plane, ...]
    boxes: tuple[Box, ...]
    bounds_lo: tuple[float, float, float]
    bounds_hi: tuple[float, float, float]


def gen_scene(seed: int) -> Scene:
    """Random unit-scale room: floor, ceiling, back and side walls, plus
    two to four boxes standing on the floor."""
    rng = np.random.default_rng(seed)
    half_w = rng.uniform(1.6, 2.4)
    height = rng.uniform(2.2, 3.0)
    depth = rng.uniform(4.5, 6.0)

    def albedo():
        return tuple(rng.uniform(0.15, 0.95, 3))

    planes = (
        Plane(axis=1, offset=0.0, normal_sign=1.0, albedo=albedo()),
        Plane(axis=1, offset=height, normal_sign=-1.0, albedo=albedo()),
        Plane(axis=2, offset=depth, normal_sign=-1.0, albedo=albedo()),
        Plane(axis=0, offset=-half_w, normal_sign=1.0, albedo=albedo()),
        Plane(axis=0, offset=half_w, normal_sign=-1.0, albedo=albedo()),
    )
    boxes = []
    for _ in range(int(rng.integers(2, 5))):
        sx = rng.uniform(0.35, 1.1)
        sz = rng.uniform(0.35, 1.1)
        sy = rng.uniform(0.4, 1.6)
        cx = rng.uniform(-half_w + 0.7, half_w - 0.7)
        cz = rng.uniform(1.8, depth - 0.7)
        boxes.append(
            Box(
                lo=(cx - sx / 2, 0.0, cz - sz / 2),
                hi=(cx + sx / 2, sy, cz + sz / 2),
                albedo=albedo(),
            )
        )
    return Scene(
        planes=planes,
        boxes=tuple(boxes),
        bounds_lo=(-half_w, 0.0, 0.0),
        bounds_hi=(half_w, height, depth),
    )


def scale_scene(scene: Scene, factor: float) -> Scene:
    """Uniformly scale all geometry; images rendered by a camera placed
    proportionally to the bounds are unchanged while depth scales."""
    s = float(factor)
    planes = tuple(
        Plane(p.axis, p.offset * s, p.normal_sign, p.albedo) for p in scene.planes
    )
    boxes = tuple(
        Box(tuple(v * s for v in b.lo), tuple(v * s for v in b.hi), b.albedo)
        for b in scene.boxes
    )
    return Scene(
        planes=planes,
        boxes=boxes,
        bounds_lo=tuple(v * s for v in scene.bounds_lo),
        bounds_hi=tuple(v * s for v in scene.bounds_hi),
    )


def make_camera(scene: Scene, frame_seed: int, height: int, width: int) -> CameraModel:
    """Place a camera near the open room face looking inward.

    All placement is proportional to the scene bounds, so a scaled scene
    yields the same image with proportionally scaled depth.
    """
    rng = np.random.default_rng(frame_seed)
    lo = np.asarray(scene.bounds_lo)
    hi = np.asarray(scene.bounds_hi)
    span = hi - lo
    eye = np.array(
        [
            (lo[0] + hi[0]) / 2 + rng.uniform(-0.12, 0.12) * span[0],
            lo[1] + rng.uniform(0.45, 0.62) * span[1],
            lo[2] + rng.uniform(0.04, 0.10) * span[2],
        ]
    )
    target = np.array(
        [
            (lo[0] + hi[0]) / 2 + rng.uniform(-0.2, 0.2) * span[0],
            lo[1] + rng.uniform(0.30, 0.55) * span[1],
            lo[2] + 0.75 * span[2],
        ]
    )
    pose = look_at_pose(eye, target)
    fx = 0.9 * width
    return CameraModel(
        fx=fx, fy=fx, cx=width / 2, cy=height / 2, width=width, height=height, pose=pose
    )


def render_frame(scene: Scene, cam: CameraModel) -> tuple[np.ndarray, DepthMap]:
    """Ray-cast the scene: returns (H, W, 3) RGB in [0, 1] and the depth map."""
    for box in scene.boxes:
        if box.contains(cam.position, margin=1e-6):
            raise PoseError(f"camera {cam.position} is inside a box")

    h, w = cam.height, cam.width
    dirs = cam.pixel_directions().reshape(-1, 3) @ cam.rotation.T
    origin = cam.position

    best_t = np.full(h * w, np.inf)
    best_albedo = np.zeros((h * w, 3))
    best_normal = np.zeros((h * w, 3))

    def consider(t, hit, albedo, normal):
        closer = hit & (t < best_t)
        if not closer.any():
            return
        best_t[closer] = t[closer]
        best_albedo[closer] = albedo[closer] if albedo.ndim == 2 else albedo
        best_normal[closer] = normal[closer] if normal.ndim == 2 else normal

    for plane in scene.planes:
        d_axis = dirs[:, plane.axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (plane.offset - origin[plane.axis]) / d_axis
        facing = d_axis * plane.normal_sign < 0
        hit = facing & (t > _EPS) & np.isfinite(t)
        normal = np.zeros(3)
        normal[plane.axis] = plane.normal_sign
        consider(t, hit, np.asarray(plane.albedo), normal)

    for box in scene.boxes:
        lo = np.asarray(box.lo)
        hi = np.asarray(box.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - origin) / dirs
            t2 = (hi - origin) / dirs
        t_near = np.minimum(t1, t2)
        t_far = np.maximum(t1, t2)
        t_enter = t_near.max(axis=1)
        t_exit = t_far.min(axis=1)
        hit = (t_enter > _EPS) & (t_enter <= t_exit)
        entry_axis = np.argmax(t_near, axis=1)
        normals = np.zeros((h * w, 3))
        rows = np.arange(h * w)
        normals[rows, entry_axis] = -np.sign(dirs[rows, entry_axis])
        consider(t_enter, hit, np.asarray(box.albedo), normals)

    hit_any = np.isfinite(best_t)
    shade = 0.55 + 0.45 * np.abs(best_normal @ _LIGHT)
    rgb = np.where(hit_any[:, None], best_albedo * shade[:, None], 0.0)
    depth_values = np.where(hit_any, best_t, 0.0)
    return (
        rgb.reshape(h, w, 3),
        DepthMap(depth_values.reshape(h, w), hit_any.reshape(h, w)),
    )
