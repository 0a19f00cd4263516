"""driftlab: weak-supervision benchmarking and supervision-drift diagnostics
under structured distribution shift.

The toolkit ingests transcript-level quantification tables, builds a fixed
weak-supervision vector, trains ridge / random-forest / gradient-boosted
regressors with fixed hyperparameters, evaluates them in-domain, cross-domain,
and across time, and quantifies supervision drift through feature-stability
statistics and shift scores. A synthetic generator with a tunable drift dial
verifies the qualitative behavior at desk scale.
"""

from ._version import __version__
from .diagnostics import (
    FeatureLabelCorr,
    ImportanceStability,
    ShiftScore,
    feature_label_corr,
    importance_rank_stability,
    shift_score,
    shift_vs_performance,
)
from .features import (
    ContextMatrix,
    FeatureSet,
    Standardizer,
    apply_standardizer,
    assemble,
    augment_context_onehot,
    fit_standardizer,
    log_tpm,
    rank_pct_within_sample,
)
from .ingest import (
    ContextRegistry,
    QuantRecord,
    SampleMeta,
    align_contexts,
    parse_metadata_file,
    parse_quant_file,
    qc_admit,
)
from .labels import (
    LabelConstruction,
    WeakLabelVector,
    build_contrast_label,
    build_external_split_label,
)
from .metrics import MetricTriple, average_ranks, mae, r2, spearman
from .models import (
    ForestSpec,
    GbtSpec,
    ModelFamily,
    RidgeSpec,
    TrainedModel,
    dump_model,
    fit_forest,
    fit_gbt,
    fit_model,
    fit_ridge,
    load_model,
    predict,
)
from .protocol import (
    EvalRecord,
    Mitigation,
    RunConfig,
    Setting,
    SettingName,
    derive_settings,
    run_all,
    run_setting,
)
from .report import RunReport, emit, load_report
from .synthetic import (
    SyntheticConfig,
    SyntheticContext,
    generate_context,
    generate_expression_study,
    theorem1_check,
    theorem2_check,
)

__all__ = [name for name in dir() if not name.startswith("_")]
