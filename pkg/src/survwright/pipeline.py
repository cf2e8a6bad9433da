"""End-to-end training machinery shared by the CLI and the test harness.

The canonical flow ingests a cohort CSV against its schema, applies
prior-condition exclusions, builds outcomes, filters to the model variant
(full or digital) and sex scope, derives features, splits train/test
stratified on the outcome, freezes imputation and scaling statistics on the
train split, encodes both splits, prunes rare indicator columns (by train
prevalence), and returns everything a model fit or evaluation needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cox as _cox
from . import neural as _neural
from .bundle import ModelBundle, variant_schema
from .cohort import (
    DesignMatrix,
    OutcomeColumn,
    QualityReport,
    RawCohort,
    apply_exclusion_rules,
    build_outcome,
    column_stats,
    derive_features,
    encode,
    fit_encoding_stats,
    impute_mean,
    load_cohort,
    outcome_from_columns,
    prune_rare,
    stratified_split,
)
from .schema import CohortSchema


class PipelineError(ValueError):
    pass


@dataclass
class PreparedData:
    schema: CohortSchema            # after variant/sex adjustments
    variant: str
    sex_scope: str
    train_design: DesignMatrix
    test_design: DesignMatrix
    train_outcome: OutcomeColumn
    test_outcome: OutcomeColumn
    impute_stats: dict
    encoding_stats: dict
    report: QualityReport
    train_raw: RawCohort            # post-derive, pre-imputation
    test_raw: RawCohort

    def validation_split(self, fraction: float = 0.75, seed: int = 0):
        """Nested split of the train part (for early stopping / selection)."""
        a, b = stratified_split(self.train_outcome, fraction=fraction, seed=seed)
        return (self.train_design.subset_rows(a), self.train_outcome.subset(a),
                self.train_design.subset_rows(b), self.train_outcome.subset(b))


def _restrict_to_schema(raw: RawCohort, schema: CohortSchema) -> RawCohort:
    columns = {name: raw.columns[name] for name in schema.raw_feature_names()}
    return RawCohort(schema=schema, columns=columns, row_ids=list(raw.row_ids),
                     extra=dict(raw.extra))


def _apply_sex_scope(raw: RawCohort, schema: CohortSchema, sex_scope: str):
    if sex_scope == "all":
        return raw, schema, None
    sex_features = schema.features_with_tag("sex")
    if not sex_features:
        raise PipelineError("sex scope requested but no sex-tagged feature in schema")
    name = sex_features[0].name
    want = 1 if sex_scope == "female" else 0
    keep = [i for i, v in enumerate(raw.columns[name]) if v == want]
    if not keep:
        raise PipelineError(f"no rows with sex scope {sex_scope!r}")
    # sex-specific models drop the sex feature itself
    reduced = schema.drop_features({name})
    raw = raw.subset(keep)
    return _restrict_to_schema(raw, reduced), reduced, keep


def prepare_cohort(csv_path, schema: CohortSchema, variant: str = "full",
                   sex_scope: str = "all", seed: int = 0,
                   split_fraction: float = 0.75,
                   prune_threshold: float = 0.002) -> PreparedData:
    report = QualityReport()
    full_raw = load_cohort(csv_path, schema)
    report.n_rows = full_raw.n_rows
    report.missing_by_column = full_raw.missing_counts()
    full_raw = apply_exclusion_rules(full_raw, report)

    if schema.outcome.mode == "columns":
        outcome = outcome_from_columns(full_raw)
        raw = full_raw
    else:
        spec = schema.outcome
        event_dates = [
            [full_raw.extra[c][i] for c in spec.event_date_columns]
            for i in range(full_raw.n_rows)
        ]
        death = (full_raw.extra[spec.death_date_column]
                 if spec.death_date_column else None)
        outcome, included = build_outcome(
            event_dates, full_raw.extra[spec.assessment_date_column],
            spec.admin_censor_date, death, report, full_raw.row_ids)
        raw = full_raw.subset(included)

    schema_v = variant_schema(schema, variant)
    raw = _restrict_to_schema(raw, schema_v)
    raw, schema_v, sex_keep = _apply_sex_scope(raw, schema_v, sex_scope)
    if sex_keep is not None:
        outcome = outcome.subset(sex_keep)

    raw = derive_features(raw, schema_v, report)

    train_idx, test_idx = stratified_split(outcome, fraction=split_fraction, seed=seed)
    train_raw, test_raw = raw.subset(train_idx), raw.subset(test_idx)
    train_outcome, test_outcome = outcome.subset(train_idx), outcome.subset(test_idx)

    impute_stats = column_stats(train_raw)
    train_imputed = impute_mean(train_raw, impute_stats)
    test_imputed = impute_mean(test_raw, impute_stats)

    encoding_stats = fit_encoding_stats(train_imputed)
    train_design = encode(train_imputed, schema_v, fit_stats=encoding_stats)
    test_design = encode(test_imputed, schema_v, fit_stats=encoding_stats)

    pruned = prune_rare(train_design, prune_threshold, report)
    test_design = test_design.select(pruned.column_names)
    return PreparedData(
        schema=schema_v, variant=variant, sex_scope=sex_scope,
        train_design=pruned, test_design=test_design,
        train_outcome=train_outcome, test_outcome=test_outcome,
        impute_stats=impute_stats, encoding_stats=encoding_stats,
        report=report, train_raw=train_raw, test_raw=test_raw,
    )


def train_cox_bundle(prepared: PreparedData, features: list[str] | None = None,
                     version: str = "1", ridge: float = 0.0) -> ModelBundle:
    design = prepared.train_design
    if features:
        design = design.select(features)
    fit = _cox.fit_cox(design, prepared.train_outcome, ridge=ridge)
    return ModelBundle(
        model=fit, schema=prepared.schema,
        impute_stats=prepared.impute_stats,
        encoding_stats=prepared.encoding_stats,
        variant=prepared.variant, sex_scope=prepared.sex_scope, version=version,
    )


def train_neural_bundle(prepared: PreparedData, config: "_neural.HyperConfig",
                        features: list[str] | None = None, seed: int = 0,
                        max_epochs: int = 512, patience: int = 10,
                        version: str = "1") -> ModelBundle:
    design = prepared.train_design
    if features:
        design = design.select(features)
    a, b = stratified_split(prepared.train_outcome, fraction=0.75, seed=seed)
    model = _neural.build_network(config, design.values.shape[1], seed=seed,
                                  input_columns=list(design.column_names))
    model = _neural.train(
        model, design.subset_rows(a), prepared.train_outcome.subset(a),
        design.subset_rows(b), prepared.train_outcome.subset(b),
        max_epochs=max_epochs, patience=patience, seed=seed)
    return ModelBundle(
        model=model, schema=prepared.schema,
        impute_stats=prepared.impute_stats,
        encoding_stats=prepared.encoding_stats,
        variant=prepared.variant, sex_scope=prepared.sex_scope, version=version,
    )


def predict_test_risks(bundle: ModelBundle, prepared: PreparedData,
               horizon: float = 10.0) -> np.ndarray:
    """Predicted horizon risks for the prepared test split."""
    X = prepared.test_design.select(bundle.model_columns).values
    if bundle.model_kind == "cox":
        return _cox.predict_risk_batch(bundle.model, X, horizon)
    return _neural.predict_risk_batch(bundle.model, X, horizon)
