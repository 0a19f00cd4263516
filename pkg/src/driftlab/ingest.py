"""Quantification-table ingestion, mapping-rate QC, and cross-context alignment.

Quantification files are tab-separated with the exact header
``Name\\tLength\\tEffectiveLength\\tTPM\\tNumReads`` (one record per line,
optional trailing carriage returns). Sample metadata lives in a sidecar
plain-text file of ``key=value`` lines, one blank-line-separated block per
sample, because quantifier log formats are tool-version dependent.

Aligned registries can be persisted to a directory (one aligned quant table
per context plus a JSON manifest) and loaded back for protocol runs.
"""

import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ._version import REGISTRY_SCHEMA
from .errors import (
    AlignmentError,
    DuplicateTranscriptError,
    QuantFormatError,
    QuantParseError,
)
from .fileio import atomic_write_text

QUANT_HEADER = "Name\tLength\tEffectiveLength\tTPM\tNumReads"
META_KEYS = ("context_id", "cell_line", "timepoint_days", "percent_mapped")
DEFAULT_QC_THRESHOLD = 50.0

MANIFEST_NAME = "registry.json"
SHARED_NAME = "shared_transcripts.txt"
ADMISSION_LOG_NAME = "admission_log.tsv"
LABEL_NAME = "label.tsv"


@dataclass(frozen=True)
class QuantRecord:
    transcript_id: str
    length: int
    effective_length: float
    tpm: float
    num_reads: float


@dataclass(frozen=True)
class SampleMeta:
    context_id: str
    cell_line: str
    timepoint_days: int
    percent_mapped: float

    def __post_init__(self):
        canonical = f"{self.cell_line}_D{self.timepoint_days}"
        if self.context_id != canonical:
            raise QuantFormatError(
                f"context_id {self.context_id!r} is not the canonical form {canonical!r}"
            )
        if self.timepoint_days < 0:
            raise QuantFormatError("timepoint_days must be >= 0")
        if not 0.0 <= self.percent_mapped <= 100.0:
            raise QuantFormatError("percent_mapped must lie in [0, 100]")


@dataclass
class ContextRegistry:
    """Aligned transcript-by-context registry.

    `shared_transcripts` is the sorted intersection of transcript ids over
    all admitted contexts, and every context's record list is reordered to
    that sequence. Treat instances as immutable after construction.
    """

    contexts: Dict[str, List[QuantRecord]]
    shared_transcripts: List[str]

    def record(self, context_id: str, transcript_id: str) -> QuantRecord:
        index = self._index().get(transcript_id)
        if index is None:
            raise AlignmentError(f"{transcript_id!r} is not a shared transcript")
        return self.contexts[context_id][index]

    def tpm(self, context_id: str) -> np.ndarray:
        """TPM vector for one context, aligned to shared_transcripts."""
        return np.array([r.tpm for r in self.contexts[context_id]], dtype=float)

    def _index(self) -> Dict[str, int]:
        cached = getattr(self, "_index_cache", None)
        if cached is None:
            cached = {tid: i for i, tid in enumerate(self.shared_transcripts)}
            object.__setattr__(self, "_index_cache", cached)
        return cached


def _strip_eol(line: str) -> str:
    if line.endswith("\n"):
        line = line[:-1]
    if line.endswith("\r"):
        line = line[:-1]
    return line


def parse_quant_file(path) -> List[QuantRecord]:
    """Parse one quantification table into records, preserving file order."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines or _strip_eol(lines[0]) != QUANT_HEADER:
        raise QuantFormatError(
            f"{os.fspath(path)}: first line must be the header {QUANT_HEADER!r}"
        )
    records: List[QuantRecord] = []
    seen = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        line = _strip_eol(raw)
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise QuantParseError(f"expected 5 tab-separated fields, got {len(fields)}", lineno)
        name = fields[0]
        if not name:
            raise QuantParseError("empty transcript id", lineno)
        try:
            length = int(fields[1])
            effective_length = float(fields[2])
            tpm = float(fields[3])
            num_reads = float(fields[4])
        except ValueError as exc:
            raise QuantParseError(f"non-numeric field ({exc})", lineno) from None
        if length < 1:
            raise QuantParseError(f"length must be >= 1, got {length}", lineno)
        if not effective_length > 0:
            raise QuantParseError("effective_length must be > 0", lineno)
        if tpm < 0:
            raise QuantParseError("TPM must be >= 0", lineno)
        if num_reads < 0:
            raise QuantParseError("NumReads must be >= 0", lineno)
        if name in seen:
            raise DuplicateTranscriptError(
                f"{os.fspath(path)} line {lineno}: duplicate transcript id {name!r}"
            )
        seen.add(name)
        records.append(QuantRecord(name, length, effective_length, tpm, num_reads))
    return records


def render_quant_file(records: List[QuantRecord]) -> str:
    lines = [QUANT_HEADER]
    for r in records:
        lines.append(
            f"{r.transcript_id}\t{r.length}\t{r.effective_length!r}\t{r.tpm!r}\t{r.num_reads!r}"
        )
    return "\n".join(lines) + "\n"


def write_quant_file(path, records: List[QuantRecord]) -> None:
    atomic_write_text(path, render_quant_file(records))


def parse_metadata_file(path) -> Dict[str, SampleMeta]:
    """Parse blank-line-separated key=value blocks, one per sample."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    blocks: List[Dict[str, str]] = []
    current: Dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = _strip_eol(raw).strip()
        if not line:
            if current:
                blocks.append(current)
                current = {}
            continue
        if line.startswith("#"):
            continue
        if "=" not in line:
            raise QuantFormatError(f"{os.fspath(path)} line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in META_KEYS:
            raise QuantFormatError(f"{os.fspath(path)} line {lineno}: unknown key {key!r}")
        if key in current:
            raise QuantFormatError(
                f"{os.fspath(path)} line {lineno}: repeated key {key!r} within one sample block"
            )
        current[key] = value.strip()
    if current:
        blocks.append(current)
    metas: Dict[str, SampleMeta] = {}
    for block in blocks:
        missing = [k for k in META_KEYS if k not in block]
        if missing:
            raise QuantFormatError(f"{os.fspath(path)}: sample block missing keys {missing}")
        try:
            meta = SampleMeta(
                context_id=block["context_id"],
                cell_line=block["cell_line"],
                timepoint_days=int(block["timepoint_days"]),
                percent_mapped=float(block["percent_mapped"]),
            )
        except ValueError as exc:
            raise QuantFormatError(f"{os.fspath(path)}: bad numeric value ({exc})") from None
        if meta.context_id in metas:
            raise QuantFormatError(f"duplicate sample block for {meta.context_id!r}")
        metas[meta.context_id] = meta
    return metas


def render_metadata_file(metas: Dict[str, SampleMeta]) -> str:
    blocks = []
    for cid in sorted(metas):
        m = metas[cid]
        blocks.append(
            "\n".join(
                [
                    f"context_id={m.context_id}",
                    f"cell_line={m.cell_line}",
                    f"timepoint_days={m.timepoint_days}",
                    f"percent_mapped={m.percent_mapped!r}",
                ]
            )
        )
    return "\n\n".join(blocks) + "\n"


def write_metadata_file(path, metas: Dict[str, SampleMeta]) -> None:
    atomic_write_text(path, render_metadata_file(metas))


def qc_admit(meta: SampleMeta, threshold_pct: float = DEFAULT_QC_THRESHOLD) -> bool:
    """True iff the sample's mapping rate meets the threshold (boundary admits)."""
    if not 0.0 <= threshold_pct <= 100.0:
        raise QuantFormatError("qc threshold must lie in [0, 100]")
    return meta.percent_mapped >= threshold_pct


def align_contexts(contexts: Dict[str, List[QuantRecord]]) -> ContextRegistry:
    """Align contexts on the sorted intersection of their transcript ids."""
    if not contexts:
        raise AlignmentError("no contexts to align")
    by_id: Dict[str, Dict[str, QuantRecord]] = {}
    for cid, records in contexts.items():
        table: Dict[str, QuantRecord] = {}
        for r in records:
            if r.transcript_id in table:
                raise DuplicateTranscriptError(
                    f"context {cid!r}: duplicate transcript id {r.transcript_id!r}"
                )
            table[r.transcript_id] = r
        by_id[cid] = table
    shared = set.intersection(*(set(t) for t in by_id.values()))
    if not shared:
        raise AlignmentError("contexts share no transcripts; nothing to learn on")
    ordered = sorted(shared)
    aligned = {cid: [by_id[cid][tid] for tid in ordered] for cid in contexts}
    return ContextRegistry(contexts=aligned, shared_transcripts=ordered)


def write_registry(
    out_dir,
    registry: ContextRegistry,
    metas: Dict[str, SampleMeta],
    qc_threshold: float = DEFAULT_QC_THRESHOLD,
    admission_log: Optional[List[dict]] = None,
    label=None,
) -> None:
    """Persist an aligned registry (and optionally a fixed label) to a directory."""
    from . import labels as labels_mod  # deferred to keep import graph acyclic

    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    context_entries = []
    for cid in sorted(registry.contexts):
        meta = metas[cid]
        quant_name = f"{cid}.quant.tsv"
        write_quant_file(os.path.join(out_dir, quant_name), registry.contexts[cid])
        context_entries.append(
            {
                "context_id": cid,
                "cell_line": meta.cell_line,
                "timepoint_days": meta.timepoint_days,
                "percent_mapped": meta.percent_mapped,
                "quant": quant_name,
            }
        )
    atomic_write_text(
        os.path.join(out_dir, SHARED_NAME), "\n".join(registry.shared_transcripts) + "\n"
    )
    if admission_log is not None:
        rows = ["context_id\tpercent_mapped\tadmitted\treason"]
        for entry in admission_log:
            rows.append(
                f"{entry['context_id']}\t{entry['percent_mapped']!r}"
                f"\t{str(entry['admitted']).lower()}\t{entry['reason']}"
            )
        atomic_write_text(os.path.join(out_dir, ADMISSION_LOG_NAME), "\n".join(rows) + "\n")
    label_entry = None
    if label is not None:
        labels_mod.write_label(
            os.path.join(out_dir, LABEL_NAME), registry.shared_transcripts, label
        )
        label_entry = LABEL_NAME
    manifest = {
        "schema": REGISTRY_SCHEMA,
        "qc_threshold": qc_threshold,
        "n_shared": len(registry.shared_transcripts),
        "shared_transcripts": SHARED_NAME,
        "contexts": context_entries,
        "label": label_entry,
    }
    atomic_write_text(
        os.path.join(out_dir, MANIFEST_NAME), json.dumps(manifest, indent=2) + "\n"
    )


def load_registry(in_dir):
    """Load a persisted registry.

    Returns (registry, metas, manifest). Quant tables are validated against
    the stored shared-transcript order.
    """
    in_dir = os.fspath(in_dir)
    manifest_path = os.path.join(in_dir, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise QuantFormatError(f"{in_dir}: missing {MANIFEST_NAME}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != REGISTRY_SCHEMA:
        raise QuantFormatError(f"{manifest_path}: unexpected schema {manifest.get('schema')!r}")
    with open(os.path.join(in_dir, manifest["shared_transcripts"]), "r", encoding="utf-8") as fh:
        shared = [line for line in (ln.strip() for ln in fh) if line]
    contexts: Dict[str, List[QuantRecord]] = {}
    metas: Dict[str, SampleMeta] = {}
    for entry in manifest["contexts"]:
        cid = entry["context_id"]
        records = parse_quant_file(os.path.join(in_dir, entry["quant"]))
        ids = [r.transcript_id for r in records]
        if ids != shared:
            raise AlignmentError(f"context {cid!r} quant table does not match shared order")
        contexts[cid] = records
        metas[cid] = SampleMeta(
            context_id=cid,
            cell_line=entry["cell_line"],
            timepoint_days=int(entry["timepoint_days"]),
            percent_mapped=float(entry["percent_mapped"]),
        )
    registry = ContextRegistry(contexts=contexts, shared_transcripts=shared)
    return registry, metas, manifest
