"""LiDAR prompt simulation and sparse-depth completion.

A real low-cost LiDAR map is low-resolution and noisy. Downsampling
clean depth reproduces only the resolution loss, so the simulator keeps
exact depth at a jittered grid of anchors and rebuilds every other
pixel from its k nearest anchors, weighted by RGB affinity over inverse
spatial distance. That injects structure-dependent noise a model can
learn to undo.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .depthmap import DepthMap, resize_depth, resize_image
from .errors import InputError, ParameterError, ShapeError

DEFAULT_STRIDE = 7
DEFAULT_DOWNSCALE = 4
DEFAULT_K = 4
DEFAULT_RGB_SIGMA = 0.1


@dataclass(frozen=True)
class AnchorGrid:
    """Jittered sampling grid: approximately stride-spaced, in bounds,
    pairwise distinct."""

    stride: int
    jitter: float
    height: int
    width: int
    seed: int
    anchors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        for r, c in self.anchors:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ParameterError(f"anchor ({r}, {c}) outside {self.height}x{self.width}")
            if (r, c) in seen:
                raise ParameterError(f"duplicate anchor ({r}, {c})")
            seen.add((r, c))

    @classmethod
    def generate(
        cls, height: int, width: int, stride: int = DEFAULT_STRIDE,
        seed: int = 0, jitter: float | None = None,
    ) -> "AnchorGrid":
        if stride < 1:
            raise ParameterError(f"stride must be >= 1, got {stride}")
        if jitter is None:
            jitter = stride / 3.0
        if jitter >= stride / 2.0:
            raise ParameterError(
                f"jitter {jitter} must stay below stride/2={stride / 2} to keep anchors distinct"
            )
        rng = np.random.default_rng(seed)
        rows = np.arange(0, height, stride)
        cols = np.arange(0, width, stride)
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        dr = rng.uniform(-jitter, jitter, size=rr.shape)
        dc = rng.uniform(-jitter, jitter, size=cc.shape)
        jr = np.clip(np.rint(rr + dr).astype(int), 0, height - 1)
        jc = np.clip(np.rint(cc + dc).astype(int), 0, width - 1)
        anchors = tuple((int(r), int(c)) for r, c in zip(jr.ravel(), jc.ravel()))
        return cls(stride=stride, jitter=float(jitter), height=height, width=width,
                   seed=seed, anchors=anchors)

    def coords(self) -> np.ndarray:
        return np.asarray(self.anchors, dtype=np.float64)


def prompt_resolution(height: int, width: int, downscale: int = DEFAULT_DOWNSCALE) -> tuple[int, int]:
    return max(1, height // downscale), max(1, width // downscale)


def naive_downsample(gt: DepthMap, out_h: int, out_w: int) -> DepthMap:
    """Plain bilinear downsampling of clean depth; the baseline prompt
    generator that carries no sensor-like noise."""
    h, w = gt.shape
    if out_h > h or out_w > w:
        raise ParameterError(f"target {out_h}x{out_w} exceeds source {h}x{w}")
    return resize_depth(gt, out_h, out_w)


def simulate_lidar(
    gt: DepthMap,
    rgb: np.ndarray,
    seed: int = 0,
    stride: int = DEFAULT_STRIDE,
    downscale: int = DEFAULT_DOWNSCALE,
    k: int = DEFAULT_K,
    rgb_sigma: float = DEFAULT_RGB_SIGMA,
) -> DepthMap:
    """Simulate a low-cost LiDAR prompt from clean depth and its image.

    The clean map is downsampled to the prompt resolution, exact values
    are kept at the anchors of a jittered stride grid, and every other
    pixel becomes a weighted mix of its k spatially nearest anchors with
    weight exp(-|rgb_q - rgb_a|^2 / (2 sigma^2)) / distance.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[:2] != gt.shape or rgb.ndim != 3:
        raise ShapeError(f"rgb {rgb.shape} is not registered with depth {gt.shape}")
    low_h, low_w = prompt_resolution(*gt.shape, downscale=downscale)
    low = resize_depth(gt, low_h, low_w).values
    rgb_low = resize_image(rgb, low_h, low_w)

    grid = AnchorGrid.generate(low_h, low_w, stride=stride, seed=seed)
    coords = grid.coords()
    if len(coords) < k:
        raise ParameterError(f"only {len(coords)} anchors for k={k}")
    anchor_depth = low[coords[:, 0].astype(int), coords[:, 1].astype(int)]
    anchor_rgb = rgb_low[coords[:, 0].astype(int), coords[:, 1].astype(int)]

    rows, cols = np.indices((low_h, low_w))
    pixels = np.stack([rows.ravel(), cols.ravel()], axis=1).astype(np.float64)
    dist, idx = cKDTree(coords).query(pixels, k=k)
    dist = np.atleast_2d(dist.reshape(len(pixels), -1))
    idx = np.atleast_2d(idx.reshape(len(pixels), -1))

    color_delta = rgb_low.reshape(-1, 1, 3) - anchor_rgb[idx]
    affinity = np.exp(-np.sum(color_delta**2, axis=2) / (2.0 * rgb_sigma**2))
    weights = affinity / np.maximum(dist, 1e-9)
    norms = weights.sum(axis=1, keepdims=True)
    fallback = 1.0 / np.maximum(dist, 1e-9)
    weights = np.where(norms > 1e-300, weights, fallback)
    weights = weights / weights.sum(axis=1, keepdims=True)

    values = (weights * anchor_depth[idx]).sum(axis=1).reshape(low_h, low_w)
    ar = coords[:, 0].astype(int)
    ac = coords[:, 1].astype(int)
    values[ar, ac] = anchor_depth
    return DepthMap(values, np.ones((low_h, low_w), dtype=bool))


def knn_complete_sparse(sparse: DepthMap, k: int = DEFAULT_K) -> DepthMap:
    """Fill invalid pixels with the inverse-distance-weighted mean of
    their k nearest valid pixels; k is clamped to the valid count."""
    n_valid = sparse.valid_count
    if n_valid == 0:
        raise InputError("sparse depth map has no valid pixels")
    if sparse.mask.all():
        return DepthMap(sparse.values.copy(), sparse.mask.copy())
    k_eff = min(k, n_valid)
    valid_rc = np.argwhere(sparse.mask).astype(np.float64)
    valid_values = sparse.values[sparse.mask]
    holes = np.argwhere(~sparse.mask).astype(np.float64)
    dist, idx = cKDTree(valid_rc).query(holes, k=k_eff)
    dist = np.atleast_2d(dist.reshape(len(holes), -1))
    idx = np.atleast_2d(idx.reshape(len(holes), -1))
    weights = 1.0 / np.maximum(dist, 1e-9)
    weights = weights / weights.sum(axis=1, keepdims=True)
    filled_values = (weights * valid_values[idx]).sum(axis=1)
    out = sparse.values.copy()
    out[~sparse.mask] = filled_values
    return DepthMap(out, np.ones_like(sparse.mask))
