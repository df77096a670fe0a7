"""Sharpness scoring and blur-aware frame selection.

Sharpness is the variance of the 4-neighbor Laplacian response on a
grayscale image. Selection walks the sequence in 30-frame windows and
keeps the sharpest eligible frame of each window, subject to two
spacing rules: no two picks closer than 6 frames, and never more than
2 seconds of video without a pick (extra picks are forced in when a
gap would grow too long).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParameterError

WINDOW = 30
MIN_SPACING = 6


@dataclass(frozen=True)
class FrameScore:
    index: int
    sharpness: float

    def __post_init__(self):
        if self.sharpness < 0:
            raise ParameterError(f"sharpness must be >= 0, got {self.sharpness}")


def laplacian_sharpness(gray: np.ndarray) -> float:
    """Variance of the [0,1,0; 1,-4,1; 0,1,0] response on the interior."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim == 3:
        gray = gray.mean(axis=2)
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        return 0.0
    response = (
        gray[:-2, 1:-1] + gray[2:, 1:-1] + gray[1:-1, :-2] + gray[1:-1, 2:]
        - 4.0 * gray[1:-1, 1:-1]
    )
    return float(np.var(response))


def score_frames(images) -> list[FrameScore]:
    return [FrameScore(i, laplacian_sharpness(img)) for i, img in enumerate(images)]


def _sharpness_array(scores) -> np.ndarray:
    if len(scores) == 0:
        raise InputError("no frames to select from")
    if isinstance(scores[0], FrameScore):
        arr = np.full(max(s.index for s in scores) + 1, -np.inf)
        for s in scores:
            arr[s.index] = s.sharpness
        if np.isneginf(arr).any():
            raise InputError("frame scores must cover a contiguous index range")
        return arr
    return np.asarray(scores, dtype=np.float64)


def _argmax_first(sharp: np.ndarray, lo: int, hi: int) -> int:
    """Index of the sharpest frame in [lo, hi]; ties pick the earliest."""
    window = sharp[lo : hi + 1]
    return lo + int(np.argmax(window))


def select_sharp_frames(scores, fps: float) -> list[int]:
    """Pick sharp frames: per-window argmax, 6-frame spacing, 2 s coverage.

    ``fps`` must give a 2-second span of at least 12 frames; below that
    the spacing rule and the coverage rule contradict each other.
    """
    if fps <= 0:
        raise ParameterError(f"fps must be positive, got {fps}")
    span = int(round(2.0 * fps))
    if span < 2 * MIN_SPACING:
        raise ParameterError(
            f"2 s at {fps} fps is {span} frames; need at least {2 * MIN_SPACING} "
            "for the spacing rule to stay satisfiable"
        )
    sharp = _sharpness_array(scores)
    n = len(sharp)
    picks: list[int] = []

    def force_between(last: int, nxt: int) -> int:
        """Insert forced picks so that nxt - last <= span; returns new last."""
        while nxt - last > span:
            lo = 0 if last < 0 else last + MIN_SPACING
            hi = min(last + span, nxt - MIN_SPACING)
            pick = _argmax_first(sharp, lo, hi)
            picks.append(pick)
            last = pick
        return last

    last = -1
    for start in range(0, n, WINDOW):
        end = min(start + WINDOW, n)
        lo = max(start, 0 if last < 0 else last + MIN_SPACING)
        if lo >= end:
            continue
        primary = _argmax_first(sharp, lo, end - 1)
        last = force_between(last, primary)
        picks.append(primary)
        last = primary

    while last < n - span:
        pick = _argmax_first(sharp, last + MIN_SPACING, last + span)
        picks.append(pick)
        last = pick
    return sorted(picks)
