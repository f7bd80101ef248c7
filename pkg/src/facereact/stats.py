"""Numerical kernels shared by the metric suite.

Concordance correlation, mean squared error, frame variance, time-lagged
cross-correlation, and Frechet distance between Gaussian fits.  All moments
are population moments (ddof=0); degenerate zero-variance inputs follow fixed
rules instead of propagating NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import as_frames
from .errors import ValidationError

GAUSSIAN_RIDGE = 1e-6


@dataclass(frozen=True)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class LagResult:
    peak_lag: int
    peak_correlation: float


def _check_equal_length(x, y) -> tuple[np.ndarray, np.ndarray]:
    a, b = as_frames(x), as_frames(y)
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"schema mismatch: {a.shape[1]} vs {b.shape[1]} channels")
    if a.shape[0] != b.shape[0]:
        raise ValidationError(f"length mismatch: {a.shape[0]} vs {b.shape[0]} frames")
    return a, b


def ccc(x, y) -> float:
    """Lin's concordance correlation coefficient between two equal-length sequences.

    Degenerate rules: both constant and equal -> 1, both constant and unequal
    -> 0, exactly one constant -> 0.
    """
    a = np.asarray(x, dtype=np.float64).ravel()
    b = np.asarray(y, dtype=np.float64).ravel()
    if a.shape[0] != b.shape[0]:
        raise ValidationError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise ValidationError(f"need at least 2 samples, got {a.shape[0]}")
    mx, my = a.mean(), b.mean()
    vx, vy = a.var(), b.var()
    if vx == 0.0 and vy == 0.0:
        return 1.0 if mx == my else 0.0
    cov = ((a - mx) * (b - my)).mean()
    return float(2.0 * cov / (vx + vy + (mx - my) ** 2))


def ccc_multichannel(x, y) -> float:
    """Unweighted mean of per-channel CCC over two equal-length series."""
    a, b = _check_equal_length(x, y)
    vals = [ccc(a[:, c], b[:, c]) for c in range(a.shape[1])]
    return float(np.mean(vals))


def mse(x, y) -> float:
    """Mean squared difference over frames and channels."""
    a, b = _check_equal_length(x, y)
    return float(np.mean((a - b) ** 2))


def series_variance(x) -> float:
    """Per-channel population variance across frames, averaged over channels."""
    a = as_frames(x)
    if a.shape[0] < 2:
        raise ValidationError(f"need at least 2 frames, got {a.shape[0]}")
    return float(a.var(axis=0).mean())


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Population Pearson correlation; 0 when either side has zero variance."""
    ma, mb = a.mean(), b.mean()
    da, db = a - ma, b - mb
    va = float(np.dot(da, da))
    vb = float(np.dot(db, db))
    if va == 0.0 or vb == 0.0:
        return 0.0
    r = float(np.dot(da, db)) / np.sqrt(va * vb)
    return min(1.0, max(-1.0, r))


def tlcc(x, y, max_lag: int) -> LagResult:
    """Time-lagged cross-correlation peak between two equal-length series.

    For each lag k in [-max_lag, max_lag], x[t] is paired with y[t+k] over the
    overlapping range and the per-channel Pearson correlations are averaged.
    Positive peak lag therefore means y trails x.  The peak maximizes
    |correlation|; ties prefer the smallest |k|, then the negative lag.
    """
    a, b = _check_equal_length(x, y)
    t = a.shape[0]
    if max_lag >= t:
        raise ValidationError(f"max_lag {max_lag} must be smaller than series length {t}")
    if max_lag < 0:
        raise ValidationError(f"max_lag must be >= 0, got {max_lag}")
    best_lag = 0
    best_corr = 0.0
    best_abs = -1.0
    for k in sorted(range(-max_lag, max_lag + 1), key=lambda q: (abs(q), q)):
        if k >= 0:
            xa, yb = a[: t - k], b[k:]
        else:
            xa, yb = a[-k:], b[: t + k]
        corr = float(np.mean([_pearson(xa[:, c], yb[:, c]) for c in range(a.shape[1])]))
        if abs(corr) > best_abs:
            best_abs = abs(corr)
            best_corr = corr
            best_lag = k
    return LagResult(peak_lag=best_lag, peak_correlation=best_corr)


def gaussian_fit(vectors, eps: float = GAUSSIAN_RIDGE) -> GaussianModel:
    """Sample mean and population covariance of frame vectors, ridge-regularized.

    The eps*I ridge keeps covariances positive semi-definite for the Frechet
    distance even when the sample is rank-deficient.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] < 2:
        raise ValidationError(f"need at least 2 vectors, got {v.shape[0]}")
    mean = v.mean(axis=0)
    centered = v - mean
    cov = centered.T @ centered / v.shape[0]
    cov = cov + eps * np.eye(v.shape[1])
    return GaussianModel(mean=mean, cov=cov)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    The input is symmetrized first and negative eigenvalues (numerical noise)
    are clamped to zero, so S @ S reproduces the PSD part of ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    sym = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(g1: GaussianModel, g2: GaussianModel) -> float:
    """Frechet distance between two Gaussians:
    |mu1-mu2|^2 + Tr(C1 + C2 - 2 (C1 C2)^{1/2}), clamped to >= 0."""
    if g1.mean.shape != g2.mean.shape:
        raise ValidationError(f"dimension mismatch: {g1.mean.shape} vs {g2.mean.shape}")
    if not (np.isfinite(g1.cov).all() and np.isfinite(g2.cov).all()):
        raise ValidationError("non-finite covariance")
    diff = g1.mean - g2.mean
    s1h = psd_sqrt(g1.cov)
    cross = psd_sqrt(s1h @ g2.cov @ s1h)
    val = float(diff @ diff + np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross))
    return max(0.0, val)
