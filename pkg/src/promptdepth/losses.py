"""Depth normalization and the training losses.

The prompt defines a per-frame linear scale: depth maps are mapped to
[0, 1] by the prompt's min/max and the network output is read back in
meters through the exact inverse. Losses operate on prediction tensors
so they stay differentiable; targets and masks are plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .depthmap import DepthMap
from .errors import DegenerateScaleError, InputError, ParameterError, ShapeError


@dataclass(frozen=True)
class NormScale:
    """Linear depth scaling derived from a prompt's value range."""

    d_min: float
    d_max: float

    def __post_init__(self):
        if self.d_min <= 0:
            raise ParameterError(f"d_min must be positive, got {self.d_min}")
        if self.d_max <= self.d_min:
            raise DegenerateScaleError(
                f"degenerate depth range: d_min={self.d_min}, d_max={self.d_max}"
            )

    @classmethod
    def from_depth(cls, depth: DepthMap) -> "NormScale":
        if depth.valid_count == 0:
            raise InputError("cannot derive a scale from a fully invalid depth map")
        valid = depth.valid_values()
        return cls(float(valid.min()), float(valid.max()))

    @property
    def span(self) -> float:
        return self.d_max - self.d_min


def normalize_depth(depth, scale: NormScale):
    """Map depth to (d - d_min) / (d_max - d_min); invalid pixels become 0."""
    if isinstance(depth, DepthMap):
        values = (depth.values - scale.d_min) / scale.span
        values = np.where(depth.mask, values, 0.0)
        return DepthMap(values, depth.mask.copy())
    return (np.asarray(depth, dtype=np.float64) - scale.d_min) / scale.span


def denormalize_depth(depth, scale: NormScale):
    """Exact inverse of :func:`normalize_depth` on the valid region."""
    if isinstance(depth, DepthMap):
        values = depth.values * scale.span + scale.d_min
        values = np.where(depth.mask, values, 0.0)
        return DepthMap(values, depth.mask.copy())
    return np.asarray(depth, dtype=np.float64) * scale.span + scale.d_min


@dataclass
class LossReport:
    """Loss terms of one training example; total == l1 + lam * grad."""

    total: Tensor
    l1: Tensor
    grad: Tensor
    lam: float


def _target_arrays(target, mask) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(target, DepthMap):
        values = target.values
        base_mask = target.mask
    else:
        values = np.asarray(target, dtype=np.float64)
        base_mask = np.ones(values.shape, dtype=bool)
    if mask is not None:
        base_mask = base_mask & np.asarray(mask, dtype=bool)
    return values, base_mask


def _as_pred(pred) -> Tensor:
    return pred if isinstance(pred, Tensor) else Tensor(pred)


def l1_loss(pred, target, mask=None) -> Tensor:
    """Masked mean absolute difference, differentiable w.r.t. ``pred``."""
    pred = _as_pred(pred)
    values, m = _target_arrays(target, mask)
    if pred.shape != values.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {values.shape}")
    count = int(m.sum())
    if count == 0:
        raise InputError("l1_loss mask selects no pixels")
    diff = ad.absolute(ad.sub(pred, Tensor(values)))
    return ad.scale(ad.reduce_sum(ad.mul(diff, Tensor(m.astype(np.float64)))), 1.0 / count)


def grad_loss(pred, target, mask=None) -> Tensor:
    """Mean |forward difference| of the residual along x plus along y.

    A difference participates only when both of its endpoints are valid;
    the last row/column has no forward difference. Constant offsets of
    the residual cancel exactly.
    """
    pred = _as_pred(pred)
    values, m = _target_arrays(target, mask)
    if pred.shape != values.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {values.shape}")
    h, w = values.shape
    residual = ad.sub(pred, Tensor(values))

    terms = []
    total_pairs = 0
    if w > 1:
        vx = m[:, 1:] & m[:, :-1]
        nx = int(vx.sum())
        total_pairs += nx
        if nx:
            dx = ad.sub(ad.narrow(residual, 1, 1, w - 1), ad.narrow(residual, 1, 0, w - 1))
            sx = ad.reduce_sum(ad.mul(ad.absolute(dx), Tensor(vx.astype(np.float64))))
            terms.append(ad.scale(sx, 1.0 / nx))
    if h > 1:
        vy = m[1:, :] & m[:-1, :]
        ny = int(vy.sum())
        total_pairs += ny
        if ny:
            dy = ad.sub(ad.narrow(residual, 0, 1, h - 1), ad.narrow(residual, 0, 0, h - 1))
            sy = ad.reduce_sum(ad.mul(ad.absolute(dy), Tensor(vy.astype(np.float64))))
            terms.append(ad.scale(sy, 1.0 / ny))
    if total_pairs == 0:
        raise InputError("grad_loss has no valid forward differences")
    loss = terms[0]
    for term in terms[1:]:
        loss = ad.add(loss, term)
    return loss


def edge_aware_loss(pred, gt, pseudo, lam: float = 0.5, gt_mask=None, pseudo_mask=None) -> LossReport:
    """L1 against scanner-grade depth plus lam * gradient loss against
    edge-accurate pseudo depth, each masked by its own source validity."""
    _, m_gt = _target_arrays(gt, gt_mask)
    _, m_ps = _target_arrays(pseudo, pseudo_mask)
    if not m_gt.any() and not m_ps.any():
        raise InputError("edge_aware_loss: both masks are empty")
    zero = Tensor(0.0)
    l1 = l1_loss(pred, gt, gt_mask) if m_gt.any() else zero
    g = grad_loss(pred, pseudo, pseudo_mask) if m_ps.any() else zero
    total = ad.add(l1, ad.scale(g, lam))
    return LossReport(total=total, l1=l1, grad=g, lam=float(lam))


def synthetic_loss(pred, gt, lam_grad: float = 0.5, mask=None) -> LossReport:
    """Ground-truth supervision: L1 plus lam * gradient loss, both vs gt."""
    return edge_aware_loss(pred, gt, gt, lam=lam_grad, gt_mask=mask, pseudo_mask=mask)
