"""Construction of the single fixed weak-supervision vector.

Two constructions are supported. FIXED_CONTRAST is the late-minus-early
logTPM difference, computed once and reused unchanged in every evaluation
setting. EXTERNAL_SPLIT is the leakage-robust variant: transcripts are
partitioned into two seeded halves and each transcript's label is the mean
contrast value of its k nearest neighbours (by reference logTPM) from the
opposite half, so no transcript's own measurement contributes to its own
supervision value.
"""

import json
import os
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .errors import AlignmentError, DomainError, ParameterError, QuantFormatError
from .fileio import atomic_write_text, sha256_bytes
from .rng import derive_rng

DEFAULT_NEIGHBORS = 25


class LabelConstruction(str, Enum):
    FIXED_CONTRAST = "fixed_contrast"
    EXTERNAL_SPLIT = "external_split"


@dataclass(frozen=True)
class WeakLabelVector:
    """The fixed supervision vector, aligned to the registry's shared transcripts."""

    values: np.ndarray
    construction: LabelConstruction
    reference_contexts: Tuple[str, str]  # (late, early)
    split_seed: Optional[int] = None
    k: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        if self.values.ndim != 1:
            raise DomainError("label values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("label values must be finite")

    def fingerprint(self) -> str:
        """Content digest used to assert the fixed-target invariant."""
        tag = "|".join(
            [
                self.construction.value,
                self.reference_contexts[0],
                self.reference_contexts[1],
                str(self.split_seed),
                str(self.k),
            ]
        )
        return sha256_bytes(tag.encode("utf-8") + self.values.tobytes())


def build_contrast_label(
    late_logtpm,
    early_logtpm,
    late_context: str = "late",
    early_context: str = "early",
) -> WeakLabelVector:
    """Late-minus-early logTPM response, elementwise over aligned transcripts."""
    late = np.asarray(late_logtpm, dtype=float)
    early = np.asarray(early_logtpm, dtype=float)
    if late.shape != early.shape or late.ndim != 1:
        raise AlignmentError(f"contrast vectors misaligned: {late.shape} vs {early.shape}")
    return WeakLabelVector(
        values=late - early,
        construction=LabelConstruction.FIXED_CONTRAST,
        reference_contexts=(late_context, early_context),
    )


def _nearest_mean(
    ref: np.ndarray,
    source_idx: np.ndarray,
    target_idx: np.ndarray,
    contrast_values: np.ndarray,
    k: int,
    out_values: np.ndarray,
    out_neighbors: np.ndarray,
) -> None:
    # Exhaustive search keeps tie-breaking exact: neighbours are ordered by
    # |reference difference| first, then by aligned (transcript id) position.
    source_ref = ref[source_idx]
    for i in target_idx:
        diffs = np.abs(source_ref - ref[i])
        chosen = source_idx[np.lexsort((source_idx, diffs))[:k]]
        out_values[i] = float(np.mean(contrast_values[chosen]))
        out_neighbors[i] = chosen


def build_external_split_label(
    reference_logtpm,
    contrast: WeakLabelVector,
    split_seed: int,
    k: int = DEFAULT_NEIGHBORS,
    return_neighbors: bool = False,
):
    """Leakage-robust label via a seeded 50/50 split and cross-half k-NN transfer.

    With return_neighbors=True also returns the (n, k) array of source
    transcript indices backing each label value, for disjointness audits.
    """
    ref = np.asarray(reference_logtpm, dtype=float)
    values = contrast.values
    if ref.shape != values.shape or ref.ndim != 1:
        raise AlignmentError("reference vector misaligned with the contrast label")
    n = ref.size
    if k < 1:
        raise ParameterError("k must be >= 1")
    if n < 2 * k:
        raise ParameterError(f"k={k} exceeds half of n={n}")
    perm = derive_rng(split_seed).permutation(n)
    half_a = np.sort(perm[: (n + 1) // 2])
    half_b = np.sort(perm[(n + 1) // 2 :])
    out_values = np.empty(n)
    out_neighbors = np.empty((n, k), dtype=np.int64)
    _nearest_mean(ref, half_a, half_b, values, k, out_values, out_neighbors)
    _nearest_mean(ref, half_b, half_a, values, k, out_values, out_neighbors)
    label = WeakLabelVector(
        values=out_values,
        construction=LabelConstruction.EXTERNAL_SPLIT,
        reference_contexts=contrast.reference_contexts,
        split_seed=split_seed,
        k=k,
    )
    if return_neighbors:
        return label, out_neighbors
    return label


def provenance_dict(label: WeakLabelVector) -> dict:
    return {
        "construction": label.construction.value,
        "reference_contexts": list(label.reference_contexts),
        "split_seed": label.split_seed,
        "k": label.k,
        "n": int(label.values.size),
        "fingerprint": label.fingerprint(),
    }


def write_label(path, transcript_ids, label: WeakLabelVector) -> None:
    """Two-column TSV export plus a JSON provenance sidecar."""
    if len(transcript_ids) != label.values.size:
        raise AlignmentError("transcript ids misaligned with label values")
    lines = ["transcript_id\ty"]
    for tid, v in zip(transcript_ids, label.values):
        lines.append(f"{tid}\t{float(v)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")
    atomic_write_text(
        f"{os.fspath(path)}.provenance.json", json.dumps(provenance_dict(label), indent=2) + "\n"
    )


def read_label(path):
    """Load an exported label; returns (transcript_ids, WeakLabelVector)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n").rstrip("\r") for line in fh]
    lines = [line for line in lines if line]
    if not lines or lines[0] != "transcript_id\ty":
        raise QuantFormatError(f"{os.fspath(path)}: expected header 'transcript_id\\ty'")
    ids = []
    values = []
    for line in lines[1:]:
        tid, _, v = line.partition("\t")
        ids.append(tid)
        values.append(float(v))
    sidecar = f"{os.fspath(path)}.provenance.json"
    construction = LabelConstruction.FIXED_CONTRAST
    reference = ("late", "early")
    split_seed = None
    k = None
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            prov = json.load(fh)
        construction = LabelConstruction(prov["construction"])
        reference = tuple(prov["reference_contexts"])
        split_seed = prov.get("split_seed")
        k = prov.get("k")
    label = WeakLabelVector(
        values=np.array(values, dtype=float),
        construction=construction,
        reference_contexts=reference,
        split_seed=split_seed,
        k=k,
    )
    return ids, label
