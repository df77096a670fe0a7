"""Single-channel metric depth images with validity masks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .autodiff import resize2d
from .errors import InputError, ShapeError


@dataclass
class DepthMap:
    """A (H, W) float64 depth image in meters plus a boolean validity mask.

    Invalid pixels carry no meaningful value; by convention they are
    stored as 0 on disk. Valid depths are expected to be positive.
    """

    values: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeError(f"depth map must be 2-D, got shape {self.values.shape}")
        if self.mask is None:
            self.mask = np.isfinite(self.values) & (self.values > 0)
        else:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.values.shape:
                raise ShapeError(
                    f"mask shape {self.mask.shape} != values shape {self.values.shape}"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def valid_count(self) -> int:
        return int(self.mask.sum())

    def valid_values(self) -> np.ndarray:
        return self.values[self.mask]

    def copy(self) -> "DepthMap":
        return DepthMap(self.values.copy(), self.mask.copy())


def fill_invalid_nearest(depth: DepthMap) -> DepthMap:
    """Replace invalid pixels with the value of the nearest valid pixel.

    Keeps sentinel values out of any interpolation that follows. The
    mask of the result is all-true.
    """
    if depth.valid_count == 0:
        raise InputError("cannot fill a depth map with no valid pixels")
    if depth.mask.all():
        return DepthMap(depth.values.copy(), np.ones_like(depth.mask))
    _, (ir, ic) = ndimage.distance_transform_edt(~depth.mask, return_indices=True)
    filled = depth.values[ir, ic]
    return DepthMap(filled, np.ones_like(depth.mask))


def resize_depth(depth: DepthMap, out_h: int, out_w: int) -> DepthMap:
    """Bilinearly resize a depth map, filling holes first so that no
    invalid sentinel bleeds into the interpolation."""
    filled = fill_invalid_nearest(depth)
    return DepthMap(resize2d(filled.values, out_h, out_w), np.ones((out_h, out_w), dtype=bool))


def resize_image(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinearly resize an (H, W, 3) image channel by channel."""
    image = np.asarray(image, dtype=np.float64)
    return np.stack([resize2d(image[..., c], out_h, out_w) for c in range(image.shape[-1])], axis=-1)
