"""Evaluation harness: the three settings, the model-by-feature grid,
mitigation baselines, the drift-diagnostics sweep, and report assembly.

The weak label is constructed once per run and the identical vector is
consumed by every setting; only the feature context varies. In-domain runs
use a seeded 80/20 row split; cross-domain and temporal runs train on all
rows of the training context and evaluate on all rows of the test context.
During fitting, test-context feature data is never materialized: run_setting
touches the test matrix only after the model is trained, which the matrix
access hook makes assertable.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._version import __version__
from .diagnostics import feature_label_corr, shift_score, shift_vs_performance
from .errors import DriftlabError, SettingError, UndefinedMetricError
from .features import (
    LOGTPM_COLUMN,
    ContextMatrix,
    FeatureSet,
    apply_standardizer,
    assemble,
    augment_context_onehot,
    fit_standardizer,
)
from .ingest import ContextRegistry, SampleMeta
from .labels import LabelConstruction, WeakLabelVector, provenance_dict
from .metrics import MetricTriple, mae, r2, spearman
from .models import ModelFamily, RidgeSpec, ForestSpec, GbtSpec, family_of, fit_model, predict
from .report import RunReport
from .rng import derive_rng


class SettingName(str, Enum):
    IN_DOMAIN = "in_domain"
    CROSS_DOMAIN = "cross_domain"
    TEMPORAL = "temporal"


class Mitigation(str, Enum):
    NONE = "none"
    CONTEXT_ONEHOT = "onehot"
    TRAIN_STANDARDIZE = "standardize"


_SETTING_ORDER = {name: i for i, name in enumerate(SettingName)}
_FAMILY_ORDER = {fam: i for i, fam in enumerate(ModelFamily)}
_FEATURE_ORDER = {fs: i for i, fs in enumerate(FeatureSet)}

DEFAULT_SPLIT_FRACTION = 0.8


@dataclass(frozen=True)
class Setting:
    """One train/test context assignment."""

    name: SettingName
    train_context: str
    test_context: str
    split_fraction: float = DEFAULT_SPLIT_FRACTION
    split_seed: int = 0

    def __post_init__(self):
        if self.name is SettingName.IN_DOMAIN:
            if self.train_context != self.test_context:
                raise SettingError("in-domain setting needs train_context == test_context")
            if not 0.0 < self.split_fraction < 1.0:
                raise SettingError("split_fraction must lie in (0, 1)")
        elif self.train_context == self.test_context:
            raise SettingError(f"{self.name.value} setting needs disjoint contexts")


@dataclass
class RunConfig:
    settings: Sequence[Setting]
    model_grid: Sequence[object] = (RidgeSpec(), ForestSpec())
    feature_grid: Sequence[FeatureSet] = tuple(FeatureSet)
    label_mode: LabelConstruction = LabelConstruction.FIXED_CONTRAST
    mitigation: Mitigation = Mitigation.NONE
    master_seed: int = 0
    perf_metric: str = "spearman"  # metric for the shift-vs-performance sweep
    external_k: int = 25

    def echo(self) -> dict:
        """Effective semantic configuration, echoed into report provenance."""
        return {
            "settings": [
                {
                    "name": s.name.value,
                    "train_context": s.train_context,
                    "test_context": s.test_context,
                    "split_fraction": s.split_fraction,
                    "split_seed": s.split_seed,
                }
                for s in self.settings
            ],
            "models": [family_of(spec).value for spec in self.model_grid],
            "model_specs": [
                {"family": family_of(spec).value, **spec.__dict__} for spec in self.model_grid
            ],
            "features": [fs.value for fs in self.feature_grid],
            "label_mode": self.label_mode.value,
            "mitigation": self.mitigation.value,
            "master_seed": self.master_seed,
            "perf_metric": self.perf_metric,
            "external_k": self.external_k,
        }


@dataclass
class EvalRecord:
    """One grid cell result; metrics is None when the cell errored."""

    setting: SettingName
    train_context: str
    test_context: str
    model_family: ModelFamily
    feature_set: FeatureSet
    mitigation: Mitigation
    metrics: Optional[MetricTriple] = None
    importance: Optional[List[float]] = None
    feature_names: Optional[List[str]] = None
    error: Optional[str] = None


@dataclass
class ShiftReport:
    """Diagnostics bundle produced by run_all alongside the eval records."""

    feature_label: List = field(default_factory=list)
    stability: List = field(default_factory=list)
    shift_scores: List[Dict] = field(default_factory=list)
    shift_vs_performance: List[Dict] = field(default_factory=list)


def derive_settings(
    metas: Dict[str, SampleMeta],
    split_fraction: float = DEFAULT_SPLIT_FRACTION,
    split_seed: int = 0,
) -> List[Setting]:
    """Build the three canonical settings from context metadata.

    The temporal axis is the cell line observed at two or more timepoints
    (earliest timepoint trains, latest evaluates); its early context is the
    in-domain context; the cross-domain setting trains on another cell line
    at the same early timepoint. Ambiguities resolve lexicographically.
    """
    by_line: Dict[str, List[SampleMeta]] = {}
    for meta in metas.values():
        by_line.setdefault(meta.cell_line, []).append(meta)
    temporal_lines = sorted(line for line, ms in by_line.items() if len(ms) >= 2)
    if not temporal_lines:
        raise SettingError("no cell line has two timepoints; cannot build a temporal setting")
    line = temporal_lines[0]
    ordered = sorted(by_line[line], key=lambda m: m.timepoint_days)
    early, late = ordered[0], ordered[-1]
    cross_candidates = sorted(
        m.context_id
        for m in metas.values()
        if m.cell_line != line and m.timepoint_days == early.timepoint_days
    )
    if not cross_candidates:
        raise SettingError(
            f"no other cell line observed at day {early.timepoint_days}; "
            "cannot build a cross-domain setting"
        )
    return [
        Setting(
            name=SettingName.IN_DOMAIN,
            train_context=early.context_id,
            test_context=early.context_id,
            split_fraction=split_fraction,
            split_seed=split_seed,
        ),
        Setting(
            name=SettingName.CROSS_DOMAIN,
            train_context=cross_candidates[0],
            test_context=early.context_id,
        ),
        Setting(
            name=SettingName.TEMPORAL,
            train_context=early.context_id,
            test_context=late.context_id,
        ),
    ]


def _split_indices(n: int, fraction: float, seed: int):
    perm = derive_rng(seed).permutation(n)
    cut = int(n * fraction)
    return perm[:cut], perm[cut:]


def _view(matrix: ContextMatrix, rows: np.ndarray, data: np.ndarray) -> ContextMatrix:
    ids = [matrix.transcript_ids[i] for i in rows]
    return ContextMatrix(
        context_id=matrix.context_id,
        transcript_ids=ids,
        column_names=list(matrix.column_names),
        data=data,
    )


def run_setting(
    cfg: RunConfig,
    setting: Setting,
    model_spec,
    feature_set: FeatureSet,
    train_matrix: ContextMatrix,
    test_matrix: ContextMatrix,
    label: WeakLabelVector,
    vocabulary: Sequence[str],
    return_details: bool = False,
):
    """Train one grid cell and evaluate it; returns an EvalRecord.

    The test matrix is only read after the model has been fitted.
    """
    y = label.values
    if train_matrix.n_rows != y.size or test_matrix.n_rows != y.size:
        raise SettingError("context matrices are not aligned with the label vector")
    if setting.name is SettingName.IN_DOMAIN:
        if train_matrix.context_id != test_matrix.context_id:
            raise SettingError("in-domain cell received two different contexts")
        train_rows, test_rows = _split_indices(y.size, setting.split_fraction, setting.split_seed)
    else:
        train_rows = np.arange(train_matrix.n_rows)
        test_rows = np.arange(test_matrix.n_rows)
    if test_rows.size < 2:
        raise SettingError(f"only {test_rows.size} test rows; need at least 2")
    if train_rows.size < 2:
        raise SettingError(f"only {train_rows.size} training rows; need at least 2")

    # training phase: only the training context is touched
    tm = train_matrix
    if cfg.mitigation is Mitigation.CONTEXT_ONEHOT:
        tm = augment_context_onehot(tm, vocabulary)
    X_train = tm.matrix()[train_rows]
    names = list(tm.column_names)
    standardizer = None
    if cfg.mitigation is Mitigation.TRAIN_STANDARDIZE:
        standardizer = fit_standardizer(_view(tm, train_rows, X_train))
        X_train = apply_standardizer(standardizer, _view(tm, train_rows, X_train)).data
    model = fit_model(model_spec, X_train, y[train_rows], names)

    # evaluation phase
    em = test_matrix
    if cfg.mitigation is Mitigation.CONTEXT_ONEHOT:
        em = augment_context_onehot(em, vocabulary)
    X_test = em.matrix()[test_rows]
    if standardizer is not None:
        X_test = apply_standardizer(standardizer, _view(em, test_rows, X_test)).data
    predictions = predict(model, X_test, names)
    y_test = y[test_rows]
    try:
        r2_value = r2(y_test, predictions)
    except UndefinedMetricError:
        r2_value = None
    try:
        rho = spearman(y_test, predictions)
    except UndefinedMetricError:
        rho = None
    record = EvalRecord(
        setting=setting.name,
        train_context=setting.train_context,
        test_context=setting.test_context,
        model_family=model.family,
        feature_set=feature_set,
        mitigation=cfg.mitigation,
        metrics=MetricTriple(r2=r2_value, mae=mae(y_test, predictions), spearman=rho, n=int(test_rows.size)),
        importance=[float(v) for v in model.importance],
        feature_names=names,
    )
    if return_details:
        return record, {
            "model": model,
            "predictions": predictions,
            "standardizer": standardizer,
            "train_rows": train_rows,
            "test_rows": test_rows,
        }
    return record


class _MatrixCache:
    """Lazily assembled feature matrices, one per (context, feature set)."""

    def __init__(self, registry: ContextRegistry):
        self._registry = registry
        self._cache: Dict[Tuple[str, FeatureSet], ContextMatrix] = {}

    def get(self, context_id: str, feature_set: FeatureSet) -> ContextMatrix:
        key = (context_id, feature_set)
        if key not in self._cache:
            self._cache[key] = assemble(
                context_id,
                self._registry.shared_transcripts,
                self._registry.tpm(context_id),
                feature_set,
            )
        return self._cache[key]


def _skip_cell(model_spec, feature_set: FeatureSet) -> bool:
    # boosted trees run on logTPM features only
    return isinstance(model_spec, GbtSpec) and feature_set is not FeatureSet.LOGTPM_ONLY


def _sweep_feature_set(model_spec) -> FeatureSet:
    return FeatureSet.LOGTPM_ONLY if isinstance(model_spec, GbtSpec) else FeatureSet.BOTH


def _pair_sweep(cfg: RunConfig, cache: _MatrixCache, label: WeakLabelVector, contexts: List[str]):
    """Transfer performance and shift scores over all ordered context pairs."""
    pairs = [(a, b) for a in contexts for b in contexts if a != b]
    corr_by_context = {
        cid: feature_label_corr(cache.get(cid, FeatureSet.LOGTPM_ONLY), label)[0]
        for cid in contexts
    }
    score_rows: List[Dict] = []
    svp_rows: List[Dict] = []
    for spec in cfg.model_grid:
        family = family_of(spec)
        fs = _sweep_feature_set(spec)
        fitted = {}
        for cid in contexts:
            matrix = cache.get(cid, fs)
            fitted[cid] = fit_model(spec, matrix.matrix(), label.values, matrix.column_names)
        scores = []
        perfs = []
        for a, b in pairs:
            predictions = predict(fitted[a], cache.get(b, fs).matrix(), None)
            try:
                if cfg.perf_metric == "r2":
                    perf = r2(label.values, predictions)
                else:
                    perf = spearman(label.values, predictions)
            except UndefinedMetricError:
                perf = None
            score = shift_score(corr_by_context[a], corr_by_context[b])
            if perf is not None:
                scores.append(score)
                perfs.append(perf)
            score_rows.append(
                {
                    "model": family.value,
                    "train_context": a,
                    "test_context": b,
                    "feature": LOGTPM_COLUMN,
                    "shift_score": score.value,
                    "performance": perf,
                    "metric": cfg.perf_metric,
                }
            )
        try:
            rho = shift_vs_performance(scores, perfs)
        except DriftlabError:
            rho = None
        svp_rows.append(
            {
                "model": family.value,
                "rho": rho,
                "context_pairs": len(pairs),
                "metric": cfg.perf_metric,
            }
        )
    return score_rows, svp_rows


def _record_row(record: EvalRecord) -> Dict:
    m = record.metrics
    return {
        "setting": record.setting.value,
        "train_context": record.train_context,
        "test_context": record.test_context,
        "model": record.model_family.value,
        "feature_set": record.feature_set.value,
        "mitigation": record.mitigation.value,
        "n": None if m is None else m.n,
        "r2": None if m is None else m.r2,
        "mae": None if m is None else m.mae,
        "spearman": None if m is None else m.spearman,
        "importance": record.importance,
        "feature_names": record.feature_names,
        "error": record.error,
    }


def run_all(
    cfg: RunConfig,
    registry: ContextRegistry,
    metas: Dict[str, SampleMeta],
    label: WeakLabelVector,
) -> RunReport:
    """Execute the full grid plus diagnostics and assemble one report.

    A failed grid cell is recorded with an error code and flips the report's
    partial flag; the remaining cells still run.
    """
    contexts = sorted(registry.contexts)
    cache = _MatrixCache(registry)
    label_fingerprint = label.fingerprint()
    records: List[EvalRecord] = []
    partial = False
    for setting in cfg.settings:
        for spec in cfg.model_grid:
            for fs in cfg.feature_grid:
                if _skip_cell(spec, fs):
                    continue
                assert label.fingerprint() == label_fingerprint  # fixed-target invariant
                try:
                    records.append(
                        run_setting(
                            cfg,
                            setting,
                            spec,
                            fs,
                            cache.get(setting.train_context, fs),
                            cache.get(setting.test_context, fs),
                            label,
                            contexts,
                        )
                    )
                except DriftlabError as exc:
                    partial = True
                    records.append(
                        EvalRecord(
                            setting=setting.name,
                            train_context=setting.train_context,
                            test_context=setting.test_context,
                            model_family=family_of(spec),
                            feature_set=fs,
                            mitigation=cfg.mitigation,
                            error=f"{type(exc).__name__}: {exc}",
                        )
                    )
    records.sort(
        key=lambda r: (
            _SETTING_ORDER[r.setting],
            _FAMILY_ORDER[r.model_family],
            _FEATURE_ORDER[r.feature_set],
        )
    )

    corr_rows: List[Dict] = []
    stability_rows: List[Dict] = []
    score_rows: List[Dict] = []
    svp_rows: List[Dict] = []
    try:
        per_context = {
            cid: feature_label_corr(cache.get(cid, FeatureSet.BOTH), label) for cid in contexts
        }
        for cid in contexts:
            for corr in per_context[cid]:
                corr_rows.append(
                    {
                        "context": corr.context_id,
                        "feature": corr.feature_name,
                        "spearman_corr": corr.rho,
                        "n": corr.n,
                    }
                )
        feature_names = [c.feature_name for c in per_context[contexts[0]]]
        for i, a in enumerate(contexts):
            for b in contexts[i + 1 :]:
                for pos, feature in enumerate(feature_names):
                    diff = shift_score(per_context[a][pos], per_context[b][pos])
                    stability_rows.append(
                        {
                            "feature": feature,
                            "context_a": a,
                            "context_b": b,
                            "value": diff.value,
                        }
                    )
        if len(contexts) >= 2:
            score_rows, svp_rows = _pair_sweep(cfg, cache, label, contexts)
    except DriftlabError:
        partial = True

    provenance = {
        "toolkit_version": __version__,
        "config": cfg.echo(),
        "label": provenance_dict(label),
        "seeds": {"master_seed": cfg.master_seed},
        "contexts": contexts,
        "n_shared": len(registry.shared_transcripts),
    }
    return RunReport(
        partial=partial,
        provenance=provenance,
        eval_records=[_record_row(r) for r in records],
        feature_label_corr=corr_rows,
        stability_diffs=stability_rows,
        shift_scores=score_rows,
        shift_vs_performance=svp_rows,
    )
