"""Transcript-level feature construction and the mitigation-baseline transforms.

Two features are derived from abundance: logTPM, defined as ln(TPM + 1), and
the within-sample rank percentile, defined as average-rank / n in (0, 1].
Both are monotone in TPM, so their rank statistics against any label are
identical; downstream diagnostics rely on that invariance.
"""

import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AlignmentError, DomainError, QuantFormatError, SchemaError, VocabularyError
from .fileio import atomic_write_text
from .metrics import average_ranks

LOGTPM_COLUMN = "logTPM"
RANK_COLUMN = "rank_pct_within_sample"

STANDARDIZER_EPS = 1e-12


class FeatureSet(str, Enum):
    """Which feature columns a context matrix carries."""

    LOGTPM_ONLY = "logtpm"
    RANK_ONLY = "rank"
    BOTH = "both"


@dataclass
class ContextMatrix:
    """Aligned transcript-by-feature matrix for one experimental context.

    `data` has one row per transcript (aligned to `transcript_ids`) and one
    column per entry of `column_names`. `on_access` is an optional hook fired
    whenever the numeric data is read; the evaluation harness uses it to
    certify that test-context features are never touched while fitting.
    """

    context_id: str
    transcript_ids: List[str]
    column_names: List[str]
    data: np.ndarray
    on_access: Optional[Callable[[], None]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise DomainError("context matrix data must be 2-dimensional")
        if self.data.shape != (len(self.transcript_ids), len(self.column_names)):
            raise DomainError(
                f"data shape {self.data.shape} does not match "
                f"{len(self.transcript_ids)} transcripts x {len(self.column_names)} columns"
            )

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    def matrix(self) -> np.ndarray:
        """The full feature block; fires the access hook."""
        if self.on_access is not None:
            self.on_access()
        return self.data

    def column(self, name: str) -> np.ndarray:
        if name not in self.column_names:
            raise SchemaError(f"no column named {name!r}")
        if self.on_access is not None:
            self.on_access()
        return self.data[:, self.column_names.index(name)]


def log_tpm(tpm):
    """ln(TPM + 1) for a scalar or vector of non-negative abundances."""
    arr = np.asarray(tpm, dtype=float)
    if np.any(arr < 0):
        raise DomainError("TPM values must be non-negative")
    out = np.log1p(arr)
    return float(out) if np.isscalar(tpm) or arr.ndim == 0 else out


def rank_pct_within_sample(values) -> np.ndarray:
    """Tie-averaged rank divided by n; values lie in (0, 1]."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError("rank percentile needs a non-empty 1-d vector")
    return average_ranks(arr) / arr.size


def assemble(
    context_id: str,
    transcript_ids: Sequence[str],
    tpm: Sequence[float],
    feature_set: FeatureSet = FeatureSet.BOTH,
) -> ContextMatrix:
    """Build the feature matrix for one context from its aligned TPM vector."""
    tpm_arr = np.asarray(tpm, dtype=float)
    if tpm_arr.shape != (len(transcript_ids),):
        raise AlignmentError(
            f"TPM vector length {tpm_arr.size} does not match {len(transcript_ids)} transcripts"
        )
    logtpm = log_tpm(tpm_arr)
    columns = []
    names = []
    if feature_set in (FeatureSet.LOGTPM_ONLY, FeatureSet.BOTH):
        names.append(LOGTPM_COLUMN)
        columns.append(logtpm)
    if feature_set in (FeatureSet.RANK_ONLY, FeatureSet.BOTH):
        names.append(RANK_COLUMN)
        columns.append(rank_pct_within_sample(logtpm))
    return ContextMatrix(
        context_id=context_id,
        transcript_ids=list(transcript_ids),
        column_names=names,
        data=np.column_stack(columns),
    )


def onehot_column_name(context_id: str) -> str:
    return f"ctx_{context_id}"


def augment_context_onehot(matrix: ContextMatrix, vocabulary: Sequence[str]) -> ContextMatrix:
    """Append one indicator column per vocabulary context.

    The column for the matrix's own context is all ones; the others are all
    zeros.
    """
    vocab = list(vocabulary)
    if matrix.context_id not in vocab:
        raise VocabularyError(f"context {matrix.context_id!r} not in vocabulary {vocab}")
    n = matrix.n_rows
    indicators = np.zeros((n, len(vocab)))
    indicators[:, vocab.index(matrix.context_id)] = 1.0
    return ContextMatrix(
        context_id=matrix.context_id,
        transcript_ids=matrix.transcript_ids,
        column_names=matrix.column_names + [onehot_column_name(c) for c in vocab],
        data=np.hstack([matrix.matrix(), indicators]),
        on_access=matrix.on_access,
    )


@dataclass(frozen=True)
class Standardizer:
    """Per-column mean and population standard deviation of a training matrix.

    Standard deviations are clamped from below at STANDARDIZER_EPS; columns
    that hit the clamp are listed in `degenerate` and flagged downstream
    rather than treated as errors.
    """

    column_names: Tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    degenerate: Tuple[str, ...]


def fit_standardizer(train: ContextMatrix) -> Standardizer:
    if train.n_rows < 2:
        raise DomainError("standardizer needs at least 2 training rows")
    data = train.matrix()
    mean = data.mean(axis=0)
    sd = data.std(axis=0)  # population convention
    clamped = sd < STANDARDIZER_EPS
    sd = np.maximum(sd, STANDARDIZER_EPS)
    degenerate = tuple(name for name, c in zip(train.column_names, clamped) if c)
    return Standardizer(
        column_names=tuple(train.column_names), mean=mean, sd=sd, degenerate=degenerate
    )


def apply_standardizer(standardizer: Standardizer, matrix: ContextMatrix) -> ContextMatrix:
    """Transform every column with training-context statistics only."""
    if tuple(matrix.column_names) != standardizer.column_names:
        raise SchemaError(
            f"columns {matrix.column_names} do not match standardizer "
            f"columns {list(standardizer.column_names)}"
        )
    data = (matrix.matrix() - standardizer.mean) / standardizer.sd
    return ContextMatrix(
        context_id=matrix.context_id,
        transcript_ids=matrix.transcript_ids,
        column_names=list(matrix.column_names),
        data=data,
        on_access=matrix.on_access,
    )


def render_context_matrix(matrix: ContextMatrix) -> str:
    lines = ["\t".join(["transcript_id"] + list(matrix.column_names))]
    data = matrix.data
    for i, tid in enumerate(matrix.transcript_ids):
        lines.append("\t".join([tid] + [repr(float(v)) for v in data[i]]))
    return "\n".join(lines) + "\n"


def write_context_matrix(matrix: ContextMatrix, path) -> None:
    atomic_write_text(path, render_context_matrix(matrix))


def read_context_matrix(path, context_id: Optional[str] = None) -> ContextMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n").rstrip("\r") for line in fh]
    lines = [line for line in lines if line]
    if not lines or not lines[0].startswith("transcript_id\t"):
        raise QuantFormatError(f"{os.fspath(path)}: expected a transcript_id header column")
    names = lines[0].split("\t")[1:]
    ids = []
    rows = []
    for line in lines[1:]:
        fields = line.split("\t")
        if len(fields) != len(names) + 1:
            raise QuantFormatError(f"{os.fspath(path)}: ragged row {fields[0]!r}")
        ids.append(fields[0])
        rows.append([float(v) for v in fields[1:]])
    if context_id is None:
        context_id = os.path.basename(os.fspath(path)).split(".")[0]
    return ContextMatrix(
        context_id=context_id,
        transcript_ids=ids,
        column_names=names,
        data=np.array(rows, dtype=float).reshape(len(ids), len(names)),
    )
