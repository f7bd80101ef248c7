"""Multichannel dynamic time warping: full DP, Sakoe-Chiba banding, envelope pruning.

All variants share one frame cost, the Euclidean (L2) distance between frame
vectors, and one warping path across all channels.  Raw distances carry no
path-length normalization; similarity scaling happens globally via ``sim``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .corpus import ClipSeries, as_frames
from .errors import ValidationError


@dataclass(frozen=True)
class DtwConfig:
    """Band radius in frames (None = unbounded) and optional early-abandon cutoff."""

    band_radius: int | None = None
    early_abandon_cutoff: float | None = None

    def __post_init__(self):
        if self.band_radius is not None and self.band_radius < 0:
            raise ValidationError(f"band_radius must be >= 0, got {self.band_radius}")
        if self.early_abandon_cutoff is not None and self.early_abandon_cutoff < 0:
            raise ValidationError(f"early_abandon_cutoff must be >= 0, got {self.early_abandon_cutoff}")


@dataclass(frozen=True)
class DtwResult:
    """``exact=False`` means the search abandoned early and ``distance`` is a
    certified lower bound of the banded DTW value, not the value itself."""

    distance: float
    exact: bool


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_frames(x), as_frames(y)
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"schema mismatch: {a.shape[1]} vs {b.shape[1]} channels")
    if isinstance(x, ClipSeries) and isinstance(y, ClipSeries):
        if x.schema.channels != y.schema.channels:
            raise ValidationError(f"schema mismatch: {x.clip_id!r} vs {y.clip_id!r}")
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise ValidationError("empty series")
    return a, b


def band_half_width(band_radius: int | None, n: int, m: int) -> float:
    """Effective half-width of the band around the length-adjusted diagonal.

    The floor of slope/2 + 1 keeps per-row windows overlapping on at least one
    column, so a monotone warping path always exists inside the band, for any
    radius and any length ratio.
    """
    if band_radius is None or n == 1:
        return math.inf
    slope = (m - 1) / (n - 1)
    return max(float(band_radius), 0.5 * slope + 1.0)


@njit(cache=True, nogil=True)
def _dtw_dp(x, y, w, cutoff):  # pragma: no cover - exercised via wrappers
    n = x.shape[0]
    m = y.shape[0]
    c = x.shape[1]
    slope = (m - 1) / (n - 1) if n > 1 else 0.0
    prev = np.full(m, np.inf)
    curr = np.full(m, np.inf)
    for i in range(n):
        if w >= m:
            lo, hi = 0, m - 1
        else:
            center = slope * i
            lo = int(math.ceil(center - w))
            hi = int(math.floor(center + w))
            if lo < 0:
                lo = 0
            if hi > m - 1:
                hi = m - 1
        for j in range(m):
            curr[j] = np.inf
        row_min = np.inf
        for j in range(lo, hi + 1):
            s = 0.0
            for ch in range(c):
                d = x[i, ch] - y[j, ch]
                s += d * d
            cost = math.sqrt(s)
            if i == 0 and j == 0:
                best = 0.0
            else:
                best = np.inf
                if i > 0:
                    if prev[j] < best:
                        best = prev[j]
                    if j > 0 and prev[j - 1] < best:
                        best = prev[j - 1]
                if j > 0 and curr[j - 1] < best:
                    best = curr[j - 1]
            v = cost + best
            curr[j] = v
            if v < row_min:
                row_min = v
        if row_min > cutoff:
            return row_min, False
        tmp = prev
        prev = curr
        curr = tmp
    return prev[m - 1], True


@njit(cache=True, nogil=True)
def _lb_keogh_dp(x, y, w):  # pragma: no cover - exercised via wrappers
    n = x.shape[0]
    m = y.shape[0]
    c = x.shape[1]
    slope = (m - 1) / (n - 1) if n > 1 else 0.0
    total = 0.0
    for i in range(n):
        if w >= m:
            lo, hi = 0, m - 1
        else:
            center = slope * i
            lo = int(math.ceil(center - w))
            hi = int(math.floor(center + w))
            if lo < 0:
                lo = 0
            if hi > m - 1:
                hi = m - 1
        s = 0.0
        for ch in range(c):
            u = y[lo, ch]
            l = y[lo, ch]
            for j in range(lo + 1, hi + 1):
                v = y[j, ch]
                if v > u:
                    u = v
                if v < l:
                    l = v
            xv = x[i, ch]
            if xv > u:
                e = xv - u
            elif xv < l:
                e = l - xv
            else:
                e = 0.0
            s += e * e
        total += math.sqrt(s)
    return total


def dtw_full(x: ClipSeries | np.ndarray, y: ClipSeries | np.ndarray) -> float:
    """Exact DTW distance over the full T_x x T_y grid."""
    a, b = _check_pair(x, y)
    dist, _ = _dtw_dp(a, b, np.inf, np.inf)
    return float(dist)


def dtw_banded(x: ClipSeries | np.ndarray, y: ClipSeries | np.ndarray, config: DtwConfig) -> DtwResult:
    """Banded DTW; equals ``dtw_full`` whenever the radius covers the grid.

    With an early-abandon cutoff, rows whose in-band minimum exceeds the cutoff
    stop the search; the result is then flagged inexact and carries that row
    minimum, a certified lower bound of the banded distance.
    """
    a, b = _check_pair(x, y)
    w = band_half_width(config.band_radius, a.shape[0], b.shape[0])
    cutoff = np.inf if config.early_abandon_cutoff is None else float(config.early_abandon_cutoff)
    dist, exact = _dtw_dp(a, b, w, cutoff)
    return DtwResult(distance=float(dist), exact=bool(exact))


def lb_keogh(x: ClipSeries | np.ndarray, y: ClipSeries | np.ndarray, band_radius: int | None) -> float:
    """Envelope lower bound for banded DTW.

    Each frame of ``x`` contributes its Euclidean distance to the per-channel
    min/max envelope of ``y`` over that frame's band window; the sum never
    exceeds ``dtw_banded`` at the same radius.
    """
    a, b = _check_pair(x, y)
    w = band_half_width(band_radius, a.shape[0], b.shape[0])
    return float(_lb_keogh_dp(a, b, w))


def sim(distance: float, max_dtw: float) -> float:
    """Map a DTW distance into [0, 1] relative to the corpus maximum."""
    if not math.isfinite(max_dtw) or max_dtw <= 0:
        raise ValidationError(f"max_dtw must be positive, got {max_dtw}")
    if distance < 0 or distance > max_dtw:
        raise ValidationError(f"distance {distance} outside [0, max_dtw={max_dtw}]")
    return 1.0 - distance / max_dtw
