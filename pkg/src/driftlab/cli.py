"""Command-line entry point wiring ingestion, label construction, protocol
runs, and synthetic verification presets into reproducible invocations.

Exit codes: 0 ok, 2 format or configuration error, 3 alignment error,
4 setting error, 5 synthetic check failure. All outputs are written
atomically and existing files are never overwritten without --force. Every
stochastic choice derives from --seed; --threads only caps worker counts
and never changes results, so it is excluded from the provenance echo.
"""

import argparse
import json
import os
import sys
from typing import Dict, List, Optional

from ._version import CONFIG_SCHEMA, REGISTRY_SCHEMA, REPORT_SCHEMA, __version__
from .errors import (
    AlignmentError,
    CheckFailure,
    ConfigError,
    DomainError,
    DriftlabError,
    DuplicateTranscriptError,
    ParameterError,
    QuantFormatError,
    QuantParseError,
    SchemaError,
    SettingError,
)
from .fileio import atomic_write_text, sha256_file
from . import ingest
from .features import FeatureSet, log_tpm
from .labels import (
    DEFAULT_NEIGHBORS,
    LabelConstruction,
    build_contrast_label,
    build_external_split_label,
    read_label,
)
from .models import ForestSpec, GbtSpec, RidgeSpec
from .protocol import Mitigation, RunConfig, derive_settings, run_all
from .report import emit
from . import synthetic

_FORMAT_ERRORS = (
    QuantFormatError,
    QuantParseError,
    DuplicateTranscriptError,
    ConfigError,
    ParameterError,
    DomainError,
    SchemaError,
)

_MODEL_TOKENS = ("ridge", "forest", "gbt")
_FEATURE_TOKENS = {"logtpm": FeatureSet.LOGTPM_ONLY, "rank": FeatureSet.RANK_ONLY, "both": FeatureSet.BOTH}
_PRESETS = ("theorem1", "theorem2", "paper-pattern")


def _read_config_file(path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{os.fspath(path)} line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve(args, file_config: Dict[str, str], name: str, convert, default):
    """Flag wins over config file, config file wins over the built-in default."""
    flag_value = getattr(args, name, None)
    if flag_value is not None:
        return flag_value
    if name in file_config:
        try:
            return convert(file_config[name])
        except ValueError as exc:
            raise ConfigError(f"config key {name!r}: {exc}") from None
    return default


def _refuse_existing(paths: List[str], force: bool) -> None:
    if force:
        return
    existing = [p for p in paths if os.path.exists(p)]
    if existing:
        raise ConfigError(
            f"refusing to overwrite existing output {existing[0]!r} (use --force)"
        )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftlab",
        description="Weak-supervision benchmarking and supervision-drift diagnostics.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=(
            f"driftlab {__version__} (config-schema {CONFIG_SCHEMA}, "
            f"report-schema {REPORT_SCHEMA}, registry-schema {REGISTRY_SCHEMA})"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="parse quant tables, apply QC, align contexts")
    p_ingest.add_argument("--quant", action="append", required=True, metavar="PATH",
                          help="quantification table; file stem must equal the context id")
    p_ingest.add_argument("--meta", required=True, metavar="PATH")
    p_ingest.add_argument("--qc-threshold", type=float, default=None, metavar="PCT")
    p_ingest.add_argument("--out", required=True, metavar="DIR")
    p_ingest.add_argument("--config", default=None, metavar="PATH")
    p_ingest.add_argument("--force", action="store_true")
    p_ingest.add_argument("--threads", type=int, default=None)

    p_run = sub.add_parser("run", help="execute the evaluation protocol on a registry")
    p_run.add_argument("--registry", required=True, metavar="DIR")
    p_run.add_argument("--label-mode", choices=("fixed", "external"), default=None)
    p_run.add_argument("--external-k", type=int, default=None)
    p_run.add_argument("--mitigation", choices=tuple(m.value for m in Mitigation), default=None)
    p_run.add_argument("--models", default=None, help="comma list of ridge,forest,gbt")
    p_run.add_argument("--features", default=None, help="comma list of logtpm,rank,both")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--perf-metric", choices=("spearman", "r2"), default=None)
    p_run.add_argument("--out", required=True, metavar="PATH", help="report JSON path")
    p_run.add_argument("--config", default=None, metavar="PATH")
    p_run.add_argument("--force", action="store_true")
    p_run.add_argument("--threads", type=int, default=None)

    p_synth = sub.add_parser("synth", help="generate synthetic data and run a verification preset")
    p_synth.add_argument("--preset", choices=_PRESETS, required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--out", required=True, metavar="DIR")
    p_synth.add_argument("--config", default=None, metavar="PATH")
    p_synth.add_argument("--force", action="store_true")
    p_synth.add_argument("--threads", type=int, default=None)
    return parser


def _cmd_ingest(args) -> int:
    file_config = _read_config_file(args.config) if args.config else {}
    threshold = _resolve(args, file_config, "qc_threshold", float, ingest.DEFAULT_QC_THRESHOLD)
    metas = ingest.parse_metadata_file(args.meta)
    parsed: Dict[str, List[ingest.QuantRecord]] = {}
    for path in args.quant:
        stem = os.path.basename(path).split(".")[0]
        if stem not in metas:
            raise QuantFormatError(
                f"quant file {path!r}: no metadata block for context {stem!r}"
            )
        parsed[stem] = ingest.parse_quant_file(path)
    admission_log = []
    admitted: Dict[str, List[ingest.QuantRecord]] = {}
    for cid in sorted(parsed):
        ok = ingest.qc_admit(metas[cid], threshold)
        admission_log.append(
            {
                "context_id": cid,
                "percent_mapped": metas[cid].percent_mapped,
                "admitted": ok,
                "reason": "ok" if ok else "qc_failed",
            }
        )
        if ok:
            admitted[cid] = parsed[cid]
    if not admitted:
        raise AlignmentError("every sample failed QC; nothing to align")
    registry = ingest.align_contexts(admitted)
    _refuse_existing([os.path.join(args.out, ingest.MANIFEST_NAME)], args.force)
    ingest.write_registry(
        args.out,
        registry,
        {cid: metas[cid] for cid in admitted},
        qc_threshold=threshold,
        admission_log=admission_log,
    )
    excluded = [e["context_id"] for e in admission_log if not e["admitted"]]
    print(
        f"ingest: admitted {len(admitted)} context(s), excluded {len(excluded)} "
        f"({', '.join(excluded) if excluded else 'none'}); "
        f"{len(registry.shared_transcripts)} shared transcripts -> {args.out}"
    )
    return 0


def _build_label(registry, settings, manifest, registry_dir, label_mode, seed, k):
    """Fixed label from the registry (stored file, else temporal contrast)."""
    temporal = settings[-1]
    if manifest.get("label"):
        ids, contrast = read_label(os.path.join(registry_dir, manifest["label"]))
        if ids != registry.shared_transcripts:
            raise AlignmentError("stored label is not aligned with the registry")
    else:
        contrast = build_contrast_label(
            log_tpm(registry.tpm(temporal.test_context)),
            log_tpm(registry.tpm(temporal.train_context)),
            late_context=temporal.test_context,
            early_context=temporal.train_context,
        )
    if label_mode is LabelConstruction.FIXED_CONTRAST:
        return contrast
    reference = log_tpm(registry.tpm(temporal.train_context))
    return build_external_split_label(reference, contrast, split_seed=seed, k=k)


def _registry_fingerprints(registry_dir, manifest) -> Dict[str, str]:
    names = [ingest.MANIFEST_NAME, manifest["shared_transcripts"]]
    names.extend(entry["quant"] for entry in manifest["contexts"])
    if manifest.get("label"):
        names.append(manifest["label"])
        sidecar = manifest["label"] + ".provenance.json"
        if os.path.exists(os.path.join(registry_dir, sidecar)):
            names.append(sidecar)
    return {name: sha256_file(os.path.join(registry_dir, name)) for name in sorted(names)}


def _cmd_run(args) -> int:
    file_config = _read_config_file(args.config) if args.config else {}
    seed = _resolve(args, file_config, "seed", int, 0)
    label_mode_token = _resolve(args, file_config, "label_mode", str, "fixed")
    mitigation_token = _resolve(args, file_config, "mitigation", str, Mitigation.NONE.value)
    models_token = _resolve(args, file_config, "models", str, "ridge,forest")
    features_token = _resolve(args, file_config, "features", str, "logtpm,rank,both")
    perf_metric = _resolve(args, file_config, "perf_metric", str, "spearman")
    external_k = _resolve(args, file_config, "external_k", int, DEFAULT_NEIGHBORS)

    label_mode = (
        LabelConstruction.EXTERNAL_SPLIT
        if label_mode_token == "external"
        else LabelConstruction.FIXED_CONTRAST
    )
    try:
        mitigation = Mitigation(mitigation_token)
    except ValueError:
        raise ConfigError(f"unknown mitigation {mitigation_token!r}") from None
    spec_by_token = {
        "ridge": RidgeSpec(),
        "forest": ForestSpec(seed=seed),
        "gbt": GbtSpec(seed=seed),
    }
    model_grid = []
    for token in models_token.split(","):
        token = token.strip()
        if token not in _MODEL_TOKENS:
            raise ConfigError(f"unknown model {token!r}; expected one of {_MODEL_TOKENS}")
        model_grid.append(spec_by_token[token])
    feature_grid = []
    for token in features_token.split(","):
        token = token.strip()
        if token not in _FEATURE_TOKENS:
            raise ConfigError(f"unknown feature set {token!r}")
        feature_grid.append(_FEATURE_TOKENS[token])
    if perf_metric not in ("spearman", "r2"):
        raise ConfigError(f"unknown perf metric {perf_metric!r}")

    registry, metas, manifest = ingest.load_registry(args.registry)
    settings = derive_settings(metas, split_seed=seed)
    label = _build_label(
        registry, settings, manifest, args.registry, label_mode, seed, external_k
    )
    cfg = RunConfig(
        settings=settings,
        model_grid=tuple(model_grid),
        feature_grid=tuple(feature_grid),
        label_mode=label_mode,
        mitigation=mitigation,
        master_seed=seed,
        perf_metric=perf_metric,
        external_k=external_k,
    )
    run_report = run_all(cfg, registry, metas, label)
    run_report.provenance["inputs"] = _registry_fingerprints(args.registry, manifest)
    out_dir = os.path.dirname(args.out) or "."
    from . import report as report_mod

    _refuse_existing(
        [
            args.out,
            os.path.join(out_dir, report_mod.EVAL_TSV),
            os.path.join(out_dir, report_mod.FEATURE_LABEL_TSV),
            os.path.join(out_dir, report_mod.STABILITY_TSV),
            os.path.join(out_dir, report_mod.SHIFT_SCORE_TSV),
        ],
        args.force,
    )
    emit(run_report, args.out)
    print(
        f"run: {len(run_report.eval_records)} eval records, "
        f"partial={str(run_report.partial).lower()} -> {args.out}"
    )
    return 0


def _write_json(path, doc) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _curve_tsv(rows: List[dict], columns: List[str]) -> str:
    lines = ["\t".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            cells.append("null" if v is None else (repr(v) if isinstance(v, float) else str(v)))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def _cmd_synth(args) -> int:
    file_config = _read_config_file(args.config) if args.config else {}
    seed = _resolve(args, file_config, "seed", int, 0)
    os.makedirs(args.out, exist_ok=True)
    if args.preset == "theorem1":
        check_path = os.path.join(args.out, "theorem1_check.json")
        curve_path = os.path.join(args.out, "theorem1_agreement.tsv")
        _refuse_existing([check_path, curve_path], args.force)
        result = synthetic.preset_theorem1(seed=seed)
        rows = [
            {"phase": phase, "n": n, "agreement": agreement}
            for phase in ("noiseless", "noisy")
            for n, agreement in zip(result[phase]["sizes"], result[phase]["agreement"])
        ]
        atomic_write_text(curve_path, _curve_tsv(rows, ["phase", "n", "agreement"]))
        _write_json(check_path, result)
    elif args.preset == "theorem2":
        check_path = os.path.join(args.out, "theorem2_check.json")
        table_path = os.path.join(args.out, "theorem2_grid.tsv")
        _refuse_existing([check_path, table_path], args.force)
        result = synthetic.preset_theorem2(seed=seed)
        rows = [
            {
                "model": family,
                "delta": row["delta"],
                "rank_rho": row["rank_rho"],
                "transfer_rho": row["transfer_rho"],
            }
            for family, block in result["families"].items()
            for row in block["rows"]
        ]
        atomic_write_text(
            table_path, _curve_tsv(rows, ["model", "delta", "rank_rho", "transfer_rho"])
        )
        _write_json(check_path, result)
    else:
        check_path = os.path.join(args.out, "pattern_check.json")
        report_path = os.path.join(args.out, "report.json")
        registry_dir = os.path.join(args.out, "registry")
        _refuse_existing(
            [check_path, report_path, os.path.join(registry_dir, ingest.MANIFEST_NAME)],
            args.force,
        )
        study, cfg, run_report, result = synthetic.preset_paper_pattern(seed=seed)
        registry = ingest.align_contexts(study.contexts)
        ingest.write_registry(registry_dir, registry, study.metas, label=study.label)
        emit(run_report, report_path)
        _write_json(check_path, result)
    status = "pass" if result["pass"] else "FAIL"
    print(f"synth --preset {args.preset}: {status} -> {args.out}")
    if not result["pass"]:
        return 5
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"ingest": _cmd_ingest, "run": _cmd_run, "synth": _cmd_synth}
    try:
        return handlers[args.command](args)
    except _FORMAT_ERRORS as exc:
        print(f"driftlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except AlignmentError as exc:
        print(f"driftlab {args.command}: alignment error: {exc}", file=sys.stderr)
        return 3
    except SettingError as exc:
        print(f"driftlab {args.command}: setting error: {exc}", file=sys.stderr)
        return 4
    except CheckFailure as exc:
        print(f"driftlab {args.command}: check failed: {exc}", file=sys.stderr)
        return 5
    except DriftlabError as exc:
        print(f"driftlab {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"driftlab {args.command}: i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
