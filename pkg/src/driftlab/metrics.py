"""Regression and rank metrics: coefficient of determination, MAE, and
tie-aware Spearman correlation.

Spearman is computed as the Pearson correlation of average ranks, which is
valid under ties and reduces to the classical sum-of-squared-rank-differences
shortcut when there are none. Metrics that are undefined for an input
(zero-variance targets, constant rank vectors) raise UndefinedMetricError
rather than silently returning a placeholder value.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, UndefinedMetricError


@dataclass(frozen=True)
class MetricTriple:
    """One evaluation row: R^2, MAE, Spearman rho, and the row count.

    r2 and spearman are None when undefined for the evaluated vectors.
    """

    r2: Optional[float]
    mae: float
    spearman: Optional[float]
    n: int


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


def _paired(a, b, min_n: int):
    x = _as_vector(a, "first vector")
    y = _as_vector(b, "second vector")
    if x.size != y.size:
        raise DomainError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < min_n:
        raise DomainError(f"need at least {min_n} observations, got {x.size}")
    return x, y


def average_ranks(values) -> np.ndarray:
    """Ascending ranks 1..n with tied values sharing the mean of their span."""
    x = _as_vector(values, "values")
    n = x.size
    if n == 0:
        raise DomainError("cannot rank an empty vector")
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    new_group = np.r_[True, sx[1:] != sx[:-1]]
    group = np.cumsum(new_group) - 1
    counts = np.bincount(group)
    last_rank = np.cumsum(counts)
    mean_rank = last_rank - (counts - 1) / 2.0
    ranks = np.empty(n)
    ranks[order] = mean_rank[group]
    return ranks


def r2(y, yhat) -> float:
    """1 - SS_res / SS_tot; negative when the predictor is worse than the mean."""
    yv, pv = _paired(y, yhat, min_n=2)
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 is undefined for a zero-variance target")
    ss_res = float(np.sum((yv - pv) ** 2))
    return 1.0 - ss_res / ss_tot


def mae(y, yhat) -> float:
    yv, pv = _paired(y, yhat, min_n=1)
    return float(np.mean(np.abs(yv - pv)))


def spearman(a, b) -> float:
    """Tie-aware Spearman rank correlation in [-1, 1]."""
    x, y = _paired(a, b, min_n=2)
    ra = average_ranks(x)
    rb = average_ranks(y)
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom_a = float(np.sqrt(np.sum(da * da)))
    denom_b = float(np.sqrt(np.sum(db * db)))
    if denom_a == 0.0 or denom_b == 0.0:
        raise UndefinedMetricError("Spearman is undefined for a constant vector")
    return float(np.sum(da * db)) / (denom_a * denom_b)
