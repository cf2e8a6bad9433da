"""Synthetic cohort generators: distributional checks against closed forms,
reproducibility, and the mixed-type raw cohort path."""

import math

import numpy as np
import pytest

from survwright.cohort import load_cohort, outcome_from_columns
from survwright.cox import fit_cox
from survwright.metrics import concordance_index
from survwright.synth import (
    CohortTemplate,
    GeneratorSpec,
    TemplateFeature,
    generate,
    generate_cohort_like_paper,
    paper_like_template,
    template_schema,
)


class TestGenerate:
    def test_exponential_median_at_null(self):
        lam = 0.08
        _, outcome, _ = generate(GeneratorSpec(
            n=50_000, beta_true=[0.0, 0.0], rate=lam, censor_time=1e9, seed=1))
        median = float(np.median(outcome.duration))
        assert median == pytest.approx(math.log(2) / lam, rel=0.05)

    def test_null_signal_cindex_half(self):
        design, outcome, truth = generate(GeneratorSpec(
            n=4000, beta_true=[0.0, 0.0, 0.0], rate=0.1, seed=2))
        c = concordance_index(design.values @ np.array([1.0, 1.0, 1.0]),
                              outcome.duration, outcome.event)
        assert abs(c - 0.5) < 0.02

    def test_reproducible_bytes(self):
        spec = GeneratorSpec(n=500, beta_true=[0.5, -0.5], rate=0.1, seed=11)
        d1, o1, _ = generate(spec)
        d2, o2, _ = generate(GeneratorSpec(n=500, beta_true=[0.5, -0.5],
                                           rate=0.1, seed=11))
        assert np.array_equal(d1.values, d2.values)
        assert np.array_equal(o1.duration, o2.duration)
        assert np.array_equal(o1.event, o2.event)

    def test_weibull_baseline(self):
        design, outcome, _ = generate(GeneratorSpec(
            n=20_000, beta_true=[0.0], baseline="weibull", weibull_shape=1.5,
            weibull_scale=12.0, censor_time=1e9, seed=3))
        # median of Weibull(k, s) is s * ln(2)^(1/k)
        expected = 12.0 * math.log(2) ** (1 / 1.5)
        assert float(np.median(outcome.duration)) == pytest.approx(expected, rel=0.05)

    def test_event_fraction_controlled(self):
        # admin censoring at t_c: event fraction = E[1 - exp(-lam t_c e^{x b})]
        lam, t_c = 0.05, 10.0
        beta = np.array([0.4])
        design, outcome, _ = generate(GeneratorSpec(
            n=20_000, beta_true=beta, rate=lam, censor_time=t_c, seed=4))
        rng = np.random.default_rng(1234)
        x = rng.standard_normal(2_000_000)
        expected = float(np.mean(1 - np.exp(-lam * t_c * np.exp(0.4 * x))))
        assert abs(outcome.event.mean() - expected) < 0.02

    def test_coverage_of_cox_fit(self):
        hits = 0
        for seed in range(30):
            design, outcome, truth = generate(GeneratorSpec(
                n=5000, beta_true=[1.0, -1.0], rate=0.1, seed=seed))
            fit = fit_cox(design, outcome)
            se = fit.standard_errors()
            if np.all(np.abs(fit.beta - truth.beta) < 3 * se):
                hits += 1
        assert hits >= 28  # ~99.5% nominal joint coverage at 3 SE


class TestPaperLikeCohort:
    def test_no_missingness_when_rate_zero(self):
        template = CohortTemplate(
            n=400,
            features=[TemplateFeature("a", "continuous", effect=0.5, missing_rate=0.0),
                      TemplateFeature("b", "binary", effect=0.2, prevalence=0.3)],
            seed=5)
        schema, rows, _ = generate_cohort_like_paper(template)
        assert all(row["a"] != "" and row["b"] != "" for row in rows)

    def test_missing_rate_matches_binomial(self):
        template = CohortTemplate(
            n=10_000,
            features=[TemplateFeature("a", "continuous", missing_rate=0.10)],
            seed=6)
        _, rows, _ = generate_cohort_like_paper(template)
        rate = sum(1 for row in rows if row["a"] == "") / len(rows)
        assert abs(rate - 0.10) < 0.02

    def test_rare_level_prunes_downstream(self, paper_store):
        from survwright.pipeline import prepare_cohort
        from survwright.schema import CohortSchema

        schema = CohortSchema.load(paper_store / "schema.json")
        prepared = prepare_cohort(paper_store / "cohort.csv", schema, seed=0)
        assert "rare_condition" in prepared.report.dropped_rare_columns
        assert "rare_condition" not in prepared.train_design.column_names

    def test_csv_loads_and_outcome_parses(self, paper_store):
        from survwright.schema import CohortSchema

        schema = CohortSchema.load(paper_store / "schema.json")
        raw = load_cohort(paper_store / "cohort.csv", schema)
        outcome = outcome_from_columns(raw)
        assert raw.n_rows == outcome.n == 4000
        assert 0.03 < outcome.event.mean() < 0.3

    def test_reproducible(self):
        t1 = paper_like_template(n=300, seed=9)
        t2 = paper_like_template(n=300, seed=9)
        _, rows1, _ = generate_cohort_like_paper(t1)
        _, rows2, _ = generate_cohort_like_paper(t2)
        assert rows1 == rows2

    def test_schema_has_variant_tags(self):
        schema = template_schema(paper_like_template(n=10))
        tags = {t for f in schema.features for t in f.tags}
        assert {"cholesterol", "sbp", "heart_rate", "sex", "modifiable"} <= tags
