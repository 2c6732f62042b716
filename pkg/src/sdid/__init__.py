"""Effect modification from pre-post data with no control group."""

__version__ = "0.1.0"

from sdid.core import (
    CovariateKind,
    LevelStats,
    MissingPolicy,
    MultiPeriodPanel,
    PanelDataset,
    SubgroupContrast,
    UnitRecord,
    subgroup_stats,
    unit_deltas,
    validate_long,
    validate_panel,
)
from sdid.errors import ConfigError, DataError, NumericalError, SdidError
from sdid.estimators import (
    EffectModEstimate,
    EstimatorSpec,
    LinearSpline,
    Polynomial,
    SaturatedIndicators,
    estimate,
    fit_delta_regression,
    sdid_all_pairs,
    sdid_categorical,
    sdid_continuous,
)
from sdid.inference import (
    analytic_se,
    bootstrap_sdid,
    confidence_interval,
    wald_test,
    with_analytic_inference,
)
from sdid.pretrends import (
    event_study_contrasts,
    interval_trend_contrasts,
    pretrends_joint_test,
    pretrends_report,
)
from sdid.simlab import DgpSpec, LevelSpec, NoiseSpec, generate, monte_carlo, oracle

__all__ = [
    "CovariateKind",
    "LevelStats",
    "MissingPolicy",
    "MultiPeriodPanel",
    "PanelDataset",
    "SubgroupContrast",
    "UnitRecord",
    "subgroup_stats",
    "unit_deltas",
    "validate_long",
    "validate_panel",
    "ConfigError",
    "DataError",
    "NumericalError",
    "SdidError",
    "EffectModEstimate",
    "EstimatorSpec",
    "LinearSpline",
    "Polynomial",
    "SaturatedIndicators",
    "estimate",
    "fit_delta_regression",
    "sdid_all_pairs",
    "sdid_categorical",
    "sdid_continuous",
    "analytic_se",
    "bootstrap_sdid",
    "confidence_interval",
    "wald_test",
    "with_analytic_inference",
    "event_study_contrasts",
    "interval_trend_contrasts",
    "pretrends_joint_test",
    "pretrends_report",
    "DgpSpec",
    "LevelSpec",
    "NoiseSpec",
    "generate",
    "monte_carlo",
    "oracle",
]
