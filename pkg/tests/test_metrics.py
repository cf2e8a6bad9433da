"""Evaluation metrics: c-index against exhaustive pair enumeration, bootstrap
percentile CIs, Kaplan-Meier, calibration deciles, and the ICI."""

import numpy as np
import pytest

from survwright.cohort import OutcomeColumn
from survwright.cox import fit_cox, predict_risk_batch
from survwright.metrics import (
    CalibrationBin,
    MetricError,
    bootstrap_ci,
    calibration_curve,
    concordance_index,
    evaluate,
    integrated_calibration_index,
    kaplan_meier,
    smoothed_calibration,
)
from survwright.synth import GeneratorSpec, generate


def brute_force_cindex(risk, time, event):
    """O(N^2) enumeration: comparable iff the shorter time is an event."""
    num = 0.0
    den = 0
    n = len(time)
    for i in range(n):
        if not event[i]:
            continue
        for j in range(n):
            if time[i] < time[j]:
                den += 1
                if risk[i] > risk[j]:
                    num += 1.0
                elif risk[i] == risk[j]:
                    num += 0.5
    if den == 0:
        raise ZeroDivisionError
    return num / den


class TestConcordance:
    def test_perfect_concordance(self):
        assert concordance_index([3, 2, 1], [1, 2, 3], [1, 1, 1]) == 1.0

    def test_perfect_discordance(self):
        assert concordance_index([1, 2, 3], [1, 2, 3], [1, 1, 1]) == 0.0

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(60)
        for trial in range(50):
            n = 200
            time = rng.exponential(5, n) if trial % 2 else \
                rng.integers(1, 40, n).astype(float)
            event = rng.uniform(size=n) < rng.uniform(0.3, 0.9)
            if not event.any():
                event[0] = True
            risk = np.round(rng.standard_normal(n), 2)  # plenty of risk ties
            fast = concordance_index(risk, time, event)
            slow = brute_force_cindex(risk, time, event)
            assert abs(fast - slow) < 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(61)
        risk = rng.standard_normal(300)
        time = rng.exponential(5, 300)
        event = rng.uniform(size=300) < 0.6
        c1 = concordance_index(risk, time, event)
        c2 = concordance_index(np.exp(2.0 * risk) + 5, time, event)
        assert c1 == c2

    def test_negation_complements_on_tie_free_data(self):
        rng = np.random.default_rng(62)
        risk = rng.standard_normal(200)
        time = rng.exponential(5, 200)  # continuous: no duration ties
        event = rng.uniform(size=200) < 0.7
        c = concordance_index(risk, time, event)
        c_neg = concordance_index(-risk, time, event)
        assert c + c_neg == pytest.approx(1.0, abs=1e-12)

    def test_no_comparable_pairs_errors(self):
        with pytest.raises(MetricError, match="comparable"):
            concordance_index([1, 2], [5.0, 5.0], [1, 1])


class TestBootstrap:
    def test_constant_metric_degenerate_ci(self):
        low, high = bootstrap_ci(lambda x: 0.7, (np.arange(100),), rounds=50, seed=1)
        assert (low, high) == (0.7, 0.7)

    def test_deterministic_for_seed(self):
        data = (np.random.default_rng(0).normal(size=300),)
        ci1 = bootstrap_ci(np.mean, data, rounds=50, seed=7)
        ci2 = bootstrap_ci(np.mean, data, rounds=50, seed=7)
        assert ci1 == ci2
        assert ci1 != bootstrap_ci(np.mean, data, rounds=50, seed=8)

    def test_width_shrinks_with_n(self):
        rng = np.random.default_rng(9)
        small = (rng.normal(size=500),)
        large = (rng.normal(size=4000),)
        lo_s, hi_s = bootstrap_ci(np.mean, small, rounds=50, seed=2)
        lo_l, hi_l = bootstrap_ci(np.mean, large, rounds=50, seed=2)
        assert (hi_l - lo_l) < (hi_s - lo_s)

    def test_failed_rounds_skipped_then_error(self):
        calls = {"n": 0}

        def flaky(x):
            calls["n"] += 1
            if calls["n"] % 3 == 0:
                raise ValueError("boom")
            return float(np.mean(x))

        low, high = bootstrap_ci(flaky, (np.arange(50.0),), rounds=30, seed=3)
        assert low <= high

        def always_fails(x):
            raise ValueError("nope")

        with pytest.raises(MetricError, match="failed"):
            bootstrap_ci(always_fails, (np.arange(10.0),), rounds=10, seed=4)

    def test_coverage_of_point_estimate(self):
        # percentile CI (50 rounds) should contain the full-sample c-index
        # nearly always
        rng = np.random.default_rng(10)
        contained = 0
        reps = 100
        for rep in range(reps):
            n = 300
            risk = rng.standard_normal(n)
            time = np.exp(-0.8 * risk) * rng.exponential(5, n)
            event = rng.uniform(size=n) < 0.7
            point = concordance_index(risk, time, event)
            low, high = bootstrap_ci(concordance_index, (risk, time, event),
                                     rounds=50, seed=rep)
            contained += low <= point <= high
        assert contained >= 95


class TestKaplanMeier:
    def test_textbook_two_subjects(self):
        km = kaplan_meier([1.0, 2.0], [True, True])
        assert km(1.0) == 0.5
        assert km(2.0) == 0.0
        assert km(0.5) == 1.0

    def test_all_censored_survival_one(self):
        km = kaplan_meier([1.0, 2.0, 3.0], [False, False, False])
        assert km(10.0) == 1.0

    def test_no_censoring_equals_empirical(self):
        rng = np.random.default_rng(11)
        t = rng.exponential(3, 500)
        km = kaplan_meier(t, np.ones(500, bool))
        for q in (0.5, 1.0, 2.0, 5.0):
            empirical = np.mean(t > q)
            assert km(q) == pytest.approx(empirical, abs=1e-12)

    def test_time_scale_equivariance(self):
        rng = np.random.default_rng(12)
        t = rng.exponential(3, 200)
        e = rng.uniform(size=200) < 0.6
        km1 = kaplan_meier(t, e)
        km2 = kaplan_meier(3.0 * t, e)
        for q in (0.5, 1.0, 2.0):
            assert km1(q) == km2(3.0 * q)

    def test_censoring_between_events(self):
        # by hand: events at 1 (n=4) and 3 (n=2): S = 3/4 * 1/2
        km = kaplan_meier([1.0, 2.0, 3.0, 4.0], [True, False, True, False])
        assert km(1.0) == pytest.approx(0.75)
        assert km(3.0) == pytest.approx(0.375)


class TestCalibration:
    def make_cohort(self, n, seed, miscalibrate=False):
        train_d, train_o, _ = generate(GeneratorSpec(
            n=n, beta_true=[0.6, -0.6], rate=0.03, seed=seed))
        test_d, test_o, _ = generate(GeneratorSpec(
            n=n, beta_true=[0.6, -0.6], rate=0.03, seed=seed + 1))
        fit = fit_cox(train_d, train_o)
        pred = predict_risk_batch(fit, test_d.values, 10.0)
        if miscalibrate:
            pred = pred ** 2
        return pred, test_o

    def test_well_specified_model_calibrates(self):
        pred, outcome = self.make_cohort(20_000, 30)
        bins = calibration_curve(pred, outcome.duration, outcome.event, 10.0)
        ici = integrated_calibration_index(bins)
        assert ici < 0.02
        for b in bins:
            if b.observed is not None:
                assert abs(b.observed - b.mean_predicted) < 0.03

    def test_miscalibration_detected(self):
        pred, outcome = self.make_cohort(20_000, 30)
        good = integrated_calibration_index(
            calibration_curve(pred, outcome.duration, outcome.event, 10.0))
        bad = integrated_calibration_index(
            calibration_curve(pred ** 2, outcome.duration, outcome.event, 10.0))
        assert bad >= 3 * good

    def test_identical_predictions_single_bin(self):
        rng = np.random.default_rng(13)
        t = rng.exponential(8, 400)
        e = rng.uniform(size=400) < 0.5
        pred = np.full(400, 0.3)
        bins = calibration_curve(pred, t, e, horizon=10.0)
        assert len(bins) == 1
        km = kaplan_meier(t, e)
        assert bins[0].observed == pytest.approx(1.0 - km(10.0))
        assert bins[0].count == 400

    def test_default_ten_bins(self):
        rng = np.random.default_rng(14)
        pred = rng.uniform(size=5000)
        t = rng.exponential(8, 5000)
        e = rng.uniform(size=5000) < 0.5
        bins = calibration_curve(pred, t, e)
        assert len(bins) == 10
        assert sum(b.count for b in bins) == 5000
        means = [b.mean_predicted for b in bins]
        assert means == sorted(means)

    def test_not_estimable_bin(self):
        # everyone censored before the horizon, no events
        pred = np.array([0.1, 0.1, 0.1])
        bins = calibration_curve(pred, [1.0, 2.0, 3.0], [False, False, False],
                                 horizon=10.0)
        assert bins[0].observed is None
        with pytest.raises(MetricError, match="estimable"):
            integrated_calibration_index(bins)

    def test_ici_identities(self):
        bins = [CalibrationBin(0.1, 0.1, 50, 5), CalibrationBin(0.3, 0.3, 50, 15)]
        assert integrated_calibration_index(bins) == 0.0
        one = [CalibrationBin(0.20, 0.25, 70, 10)]
        assert integrated_calibration_index(one) == pytest.approx(0.05)
        # bin order does not matter
        shuffled = [CalibrationBin(0.3, 0.2, 30, 3), CalibrationBin(0.1, 0.15, 70, 7)]
        assert integrated_calibration_index(shuffled) == pytest.approx(
            integrated_calibration_index(list(reversed(shuffled))))

    def test_smoothed_overlay_shape(self):
        xs, ys = smoothed_calibration(np.linspace(0, 1, 40),
                                      np.linspace(0, 1, 40) ** 1.0)
        assert xs.shape == ys.shape == (100,)
        # smoothing the identity reproduces the identity closely
        assert np.max(np.abs(xs - ys)) < 0.02


class TestEvaluate:
    def test_report_fields_and_format(self):
        design, outcome, _ = generate(GeneratorSpec(
            n=3000, beta_true=[0.7, -0.7], rate=0.03, seed=40))
        fit = fit_cox(design, outcome)
        risks = predict_risk_batch(fit, design.values, 10.0)
        report = evaluate(risks, outcome.duration, outcome.event, seed=5)
        assert 0.5 < report.c_index < 1.0
        assert report.c_index_ci[0] <= report.c_index <= report.c_index_ci[1]
        assert report.bootstrap_rounds == 50
        text = report.format_cindex()
        import re

        assert re.fullmatch(r"0\.\d{4} \[0\.\d{4} – 0\.\d{4}\]", text)
        assert report.format_ici().endswith("%")
        d = report.to_dict()
        assert d["n"] == 3000
        assert len(d["calibration_bins"]) >= 1
