"""survwright: survival-risk modeling toolkit.

Cohort preprocessing, Cox proportional-hazards and neural time-to-event
models, data-driven feature selection, censoring-aware evaluation, a
Framingham-style comparator, synthetic ground-truth cohorts, and a scoring
service with what-if support.
"""

__version__ = "0.1.0"

from .cohort import (
    DesignMatrix,
    OutcomeColumn,
    QualityReport,
    RawCohort,
    build_outcome,
    derive_features,
    encode,
    fit_encoding_stats,
    impute_mean,
    load_cohort,
    prune_rare,
    stratified_split,
    summarize_cohort,
)
from .cox import (
    CoxFit,
    StepFunction,
    baseline_cumhaz,
    fit_cox,
    partial_loglik,
    predict_risk,
    summarize,
)
from .metrics import (
    EvalReport,
    bootstrap_ci,
    calibration_curve,
    concordance_index,
    evaluate,
    integrated_calibration_index,
    kaplan_meier,
)
from .schema import CohortSchema, FeatureSpec, OutcomeSpec
from .synth import GeneratorSpec, generate, generate_cohort_like_paper, paper_like_template

__all__ = [name for name in dir() if not name.startswith("_")]
