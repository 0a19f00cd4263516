"""Supervision-drift diagnostics.

Feature relevance is summarized as the Spearman correlation between each
feature column and the fixed weak label. The shift score of a context pair
is the absolute change in that correlation, so it always lies in [0, 2] and
is zero exactly when the two contexts agree. Correlating shift scores with
transfer performance across context pairs quantifies whether larger drift
predicts worse generalization. Importance-rank stability compares normalized
importance vectors of models trained in different contexts; it is undefined
(None, not zero) when a vector has fewer than two distinct entries, e.g. for
single-feature models.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import AlignmentError, DomainError, PairingError, UndefinedMetricError
from .features import ContextMatrix
from .labels import WeakLabelVector
from .metrics import spearman


@dataclass(frozen=True)
class FeatureLabelCorr:
    context_id: str
    feature_name: str
    rho: float
    n: int


@dataclass(frozen=True)
class ShiftScore:
    feature_name: str
    context_pair: Tuple[str, str]
    value: float


@dataclass(frozen=True)
class ImportanceStability:
    model_family: str
    context_pair: Tuple[str, str]
    rank_rho: Optional[float]


def feature_label_corr(matrix: ContextMatrix, label: WeakLabelVector) -> List[FeatureLabelCorr]:
    """One record per feature column; propagates undefined-metric for constants."""
    y = label.values
    if matrix.n_rows != y.size:
        raise AlignmentError(
            f"label has {y.size} values for a {matrix.n_rows}-row context matrix"
        )
    data = matrix.matrix()
    out = []
    for j, name in enumerate(matrix.column_names):
        out.append(
            FeatureLabelCorr(
                context_id=matrix.context_id,
                feature_name=name,
                rho=spearman(data[:, j], y),
                n=y.size,
            )
        )
    return out


def shift_score(corr_c: FeatureLabelCorr, corr_cprime: FeatureLabelCorr) -> ShiftScore:
    """Absolute change in feature-label correlation between two contexts."""
    if corr_c.feature_name != corr_cprime.feature_name:
        raise PairingError(
            f"cannot pair correlations of {corr_c.feature_name!r} "
            f"and {corr_cprime.feature_name!r}"
        )
    return ShiftScore(
        feature_name=corr_c.feature_name,
        context_pair=(corr_c.context_id, corr_cprime.context_id),
        value=abs(corr_c.rho - corr_cprime.rho),
    )


def shift_vs_performance(scores: Sequence, performances: Sequence[float]) -> float:
    """Spearman correlation between per-pair shift scores and performance.

    Negative values mean larger supervision drift goes with worse transfer.
    `scores` may be ShiftScore records or raw magnitudes.
    """
    values = [s.value if isinstance(s, ShiftScore) else float(s) for s in scores]
    perfs = [float(p) for p in performances]
    if len(values) != len(perfs):
        raise DomainError(f"{len(values)} scores for {len(perfs)} performance values")
    if len(values) < 3:
        raise DomainError("need at least 3 context pairs")
    return spearman(values, perfs)


def importance_rank_stability(
    phi_c,
    phi_cprime,
    feature_names_c: Optional[Sequence[str]] = None,
    feature_names_cprime: Optional[Sequence[str]] = None,
    model_family: str = "",
    context_pair: Tuple[str, str] = ("", ""),
) -> ImportanceStability:
    """Spearman rank correlation between two importance vectors.

    rank_rho is None whenever either vector has fewer than two distinct
    entries (including the single-feature case), mirroring undefined
    attribution-stability entries rather than coercing them to zero.
    """
    a = np.asarray(phi_c, dtype=float)
    b = np.asarray(phi_cprime, dtype=float)
    if feature_names_c is not None and feature_names_cprime is not None:
        if list(feature_names_c) != list(feature_names_cprime):
            raise PairingError(
                f"feature names differ: {list(feature_names_c)} vs {list(feature_names_cprime)}"
            )
    if a.size != b.size:
        raise PairingError(f"importance lengths differ: {a.size} vs {b.size}")
    if np.unique(a).size < 2 or np.unique(b).size < 2:
        rank_rho = None
    else:
        try:
            rank_rho = spearman(a, b)
        except (UndefinedMetricError, DomainError):
            rank_rho = None
    return ImportanceStability(
        model_family=model_family, context_pair=tuple(context_pair), rank_rho=rank_rho
    )
