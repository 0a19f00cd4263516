"""Consolidated run report: canonical JSON plus paper-table-shaped TSV exports.

Report content is a pure function of (inputs, config, seed): records are
canonically ordered, floats render in their shortest round-trip form, and no
timestamps or environment details are embedded, so identical runs emit
byte-identical files. Undefined metrics serialize as explicit nulls.
"""

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List

from ._version import REPORT_SCHEMA, __version__
from .errors import SchemaError
from .fileio import atomic_write_text

EVAL_TSV = "eval.tsv"
FEATURE_LABEL_TSV = "feature_label_corr.tsv"
STABILITY_TSV = "stability.tsv"
SHIFT_SCORE_TSV = "shift_score.tsv"


@dataclass
class RunReport:
    """Serialized-form report: every section is a list of plain dict rows."""

    partial: bool = False
    provenance: Dict = field(default_factory=dict)
    eval_records: List[Dict] = field(default_factory=list)
    feature_label_corr: List[Dict] = field(default_factory=list)
    stability_diffs: List[Dict] = field(default_factory=list)
    shift_scores: List[Dict] = field(default_factory=list)
    shift_vs_performance: List[Dict] = field(default_factory=list)


def _cell(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_json(report: RunReport) -> str:
    doc = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "partial": report.partial,
        "provenance": report.provenance,
        "eval_records": report.eval_records,
        "feature_label_corr": report.feature_label_corr,
        "stability_diffs": report.stability_diffs,
        "shift_scores": report.shift_scores,
        "shift_vs_performance": report.shift_vs_performance,
    }
    return json.dumps(doc, indent=2) + "\n"


def _render_table(columns: List[str], rows: List[Dict]) -> str:
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(_cell(row.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def render_eval_tsv(report: RunReport) -> str:
    columns = [
        "setting",
        "train_context",
        "test_context",
        "model",
        "feature_set",
        "mitigation",
        "n",
        "r2",
        "mae",
        "spearman",
        "error",
    ]
    return _render_table(columns, report.eval_records)


def render_feature_label_tsv(report: RunReport) -> str:
    return _render_table(["context", "feature", "spearman_corr", "n"], report.feature_label_corr)


def render_stability_tsv(report: RunReport) -> str:
    rows = [
        {
            "feature": r["feature"],
            "context_pair": f"{r['context_a']} vs {r['context_b']}",
            "abs_delta_corr": r["value"],
        }
        for r in report.stability_diffs
    ]
    return _render_table(["feature", "context_pair", "abs_delta_corr"], rows)


def render_shift_score_tsv(report: RunReport) -> str:
    columns = [
        "model",
        "train_context",
        "test_context",
        "feature",
        "shift_score",
        "performance",
        "metric",
    ]
    return _render_table(columns, report.shift_scores)


def emit(report: RunReport, out_path) -> Dict[str, str]:
    """Write the JSON report and its TSV companions; returns written paths."""
    out_path = os.fspath(out_path)
    out_dir = os.path.dirname(out_path) or "."
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": out_path,
        "eval": os.path.join(out_dir, EVAL_TSV),
        "feature_label_corr": os.path.join(out_dir, FEATURE_LABEL_TSV),
        "stability": os.path.join(out_dir, STABILITY_TSV),
        "shift_score": os.path.join(out_dir, SHIFT_SCORE_TSV),
    }
    atomic_write_text(paths["report"], render_json(report))
    atomic_write_text(paths["eval"], render_eval_tsv(report))
    atomic_write_text(paths["feature_label_corr"], render_feature_label_tsv(report))
    atomic_write_text(paths["stability"], render_stability_tsv(report))
    atomic_write_text(paths["shift_score"], render_shift_score_tsv(report))
    return paths


def load_report(path) -> RunReport:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != REPORT_SCHEMA:
        raise SchemaError(f"unexpected report schema {doc.get('schema')!r}")
    return RunReport(
        partial=bool(doc["partial"]),
        provenance=doc["provenance"],
        eval_records=doc["eval_records"],
        feature_label_corr=doc["feature_label_corr"],
        stability_diffs=doc["stability_diffs"],
        shift_scores=doc["shift_scores"],
        shift_vs_performance=doc["shift_vs_performance"],
    )
