"""Robust scale/shift alignment and depth-quality metrics.

Monocular predictions are aligned to a metric reference with a two
parameter fit. The robust variant fits many small random groups, votes
with an inlier threshold set to the median absolute deviation of the
global least-squares residuals, and refits the winner on its inliers,
which tolerates gross outliers that break a plain least-squares fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap
from .errors import AlignmentError, InputError, ParameterError

DELTA_THRESHOLD = 1.25**0.5
_DEGENERATE_VAR = 1e-14


@dataclass(frozen=True)
class ScaleShift:
    scale: float
    shift: float
    inlier_count: int

    def apply(self, depth: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(depth, dtype=np.float64) + self.shift


@dataclass(frozen=True)
class DepthMetrics:
    l1: float
    rmse: float
    absrel: float
    delta05: float

    def as_dict(self) -> dict[str, float]:
        return {"l1": self.l1, "rmse": self.rmse, "absrel": self.absrel, "delta05": self.delta05}


def _paired_values(pred, ref, mask) -> tuple[np.ndarray, np.ndarray]:
    pred_values = pred.values if isinstance(pred, DepthMap) else np.asarray(pred, dtype=np.float64)
    ref_values = ref.values if isinstance(ref, DepthMap) else np.asarray(ref, dtype=np.float64)
    if pred_values.shape != ref_values.shape:
        raise InputError(
            f"prediction {pred_values.shape} and reference {ref_values.shape} must be "
            "the same resolution (resize the prediction first)"
        )
    joint = np.ones(pred_values.shape, dtype=bool)
    if isinstance(pred, DepthMap):
        joint &= pred.mask
    if isinstance(ref, DepthMap):
        joint &= ref.mask
    if mask is not None:
        joint &= np.asarray(mask, dtype=bool)
    return pred_values[joint], ref_values[joint]


def _fit_scale_shift(p: np.ndarray, r: np.ndarray) -> tuple[float, float] | None:
    """Closed-form least squares of r ~ scale * p + shift; None when p is
    (numerically) constant."""
    pm = p.mean()
    var = ((p - pm) ** 2).mean()
    if var < _DEGENERATE_VAR:
        return None
    cov = ((p - pm) * (r - r.mean())).mean()
    scale = cov / var
    shift = r.mean() - scale * pm
    return float(scale), float(shift)


def polyfit_align(pred, ref, mask=None) -> ScaleShift:
    """Plain least-squares alignment over all valid pixels."""
    p, r = _paired_values(pred, ref, mask)
    if p.size < 2:
        raise InputError(f"need at least 2 valid pixels, got {p.size}")
    fit = _fit_scale_shift(p, r)
    if fit is None:
        raise AlignmentError("prediction is constant; scale/shift underdetermined")
    return ScaleShift(fit[0], fit[1], int(p.size))


def ransac_scale_shift(
    pred,
    ref,
    mask=None,
    n_groups: int = 64,
    group_size: int = 5,
    seed: int = 0,
) -> ScaleShift:
    """Group-sampled robust scale/shift with an MAD voting threshold.

    Every group fits a candidate (scale, shift) by least squares; the
    candidate with the most inliers, judged against the median absolute
    deviation of the global-fit residuals, is refit on its inliers.
    """
    if n_groups < 1 or group_size < 2:
        raise ParameterError(f"need n_groups >= 1 and group_size >= 2, got {n_groups}, {group_size}")
    p, r = _paired_values(pred, ref, mask)
    if p.size < 2:
        raise InputError(f"need at least 2 valid pixels, got {p.size}")

    global_fit = _fit_scale_shift(p, r)
    if global_fit is None:
        raise AlignmentError("prediction is constant; scale/shift underdetermined")
    residuals = global_fit[0] * p + global_fit[1] - r
    mad = float(np.median(np.abs(residuals - np.median(residuals))))
    threshold = mad + 1e-12  # keep exact fits inliers when mad collapses to 0

    rng = np.random.default_rng(seed)
    size = min(group_size, p.size)
    best: tuple[int, float, float] | None = None
    for _ in range(n_groups):
        pick = rng.choice(p.size, size=size, replace=False)
        fit = _fit_scale_shift(p[pick], r[pick])
        if fit is None:
            continue
        votes = int((np.abs(fit[0] * p + fit[1] - r) < threshold).sum())
        if best is None or votes > best[0]:
            best = (votes, fit[0], fit[1])
    if best is None:
        raise AlignmentError("all sample groups were degenerate")

    inliers = np.abs(best[1] * p + best[2] - r) < threshold
    if inliers.sum() >= 2:
        refit = _fit_scale_shift(p[inliers], r[inliers])
        if refit is not None:
            final = refit
        else:
            final = (best[1], best[2])
    else:
        final = (best[1], best[2])
    final_inliers = int((np.abs(final[0] * p + final[1] - r) < threshold).sum())
    return ScaleShift(final[0], final[1], final_inliers)


def depth_metrics(pred, gt, mask=None) -> DepthMetrics:
    """L1, RMSE, AbsRel and the ratio threshold delta at 1.25^0.5."""
    p, g = _paired_values(pred, gt, mask)
    if p.size == 0:
        raise InputError("depth_metrics mask selects no pixels")
    if (g <= 0).any():
        raise InputError("ground truth must be positive on the evaluation mask")
    diff = np.abs(g - p)
    l1 = float(diff.mean())
    rmse = float(np.sqrt(((g - p) ** 2).mean()))
    absrel = float((diff / g).mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.maximum(g / p, p / g)
    delta = float((ratio < DELTA_THRESHOLD).mean())
    return DepthMetrics(l1=l1, rmse=rmse, absrel=absrel, delta05=delta)
