"""Decoupled-weight-decay Adam with per-group learning rates."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ParameterError


class AdamW:
    """AdamW over named parameter groups, each with its own learning rate.

    ``groups`` is an iterable of ``(params, lr)`` pairs where ``params``
    maps names to leaf tensors. Moment buffers persist across ``step``
    calls; gradients are read from each tensor's ``grad`` slot, with a
    missing gradient treated as zero.
    """

    def __init__(self, groups, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self._groups: list[tuple[dict[str, Tensor], float]] = []
        for params, lr in groups:
            lr = float(lr)
            if lr <= 0:
                raise ParameterError(f"learning rate must be positive, got {lr}")
            self._groups.append((dict(params), lr))
        b1, b2 = float(betas[0]), float(betas[1])
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ParameterError(f"betas must lie in [0, 1), got {betas}")
        if eps <= 0:
            raise ParameterError(f"eps must be positive, got {eps}")
        self._betas = (b1, b2)
        self._eps = float(eps)
        self._weight_decay = float(weight_decay)
        self._step_count = 0
        self._moments: dict[tuple[int, str], tuple[np.ndarray, np.ndarray]] = {}

    @property
    def step_count(self) -> int:
        return self._step_count

    def zero_grad(self) -> None:
        for params, _ in self._groups:
            for p in params.values():
                p.grad = None

    def step(self) -> None:
        self._step_count += 1
        b1, b2 = self._betas
        correct1 = 1.0 - b1**self._step_count
        correct2 = 1.0 - b2**self._step_count
        for gi, (params, lr) in enumerate(self._groups):
            for name, p in params.items():
                grad = p.grad if p.grad is not None else np.zeros_like(p.data)
                key = (gi, name)
                if key not in self._moments:
                    self._moments[key] = (np.zeros_like(p.data), np.zeros_like(p.data))
                m, v = self._moments[key]
                m = b1 * m + (1.0 - b1) * grad
                v = b2 * v + (1.0 - b2) * grad * grad
                self._moments[key] = (m, v)
                update = (m / correct1) / (np.sqrt(v / correct2) + self._eps)
                p.data = p.data - lr * (update + self._weight_decay * p.data)
