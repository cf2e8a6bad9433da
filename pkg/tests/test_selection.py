"""Feature selection: univariate filter power/size on ground truth, guarded
backward elimination, exclusion lists, and trace bookkeeping."""

import numpy as np
import pytest

from survwright.cohort import ColumnMeta, DesignMatrix, OutcomeColumn
from survwright.metrics import concordance_index
from survwright.selection import (
    apply_exclusion_list,
    backward_eliminate,
    select_features,
    univariate_filter,
)
from survwright.synth import GeneratorSpec, generate


def informative_plus_noise(n=2000, n_noise=10, seed=0, beta=1.0):
    rng = np.random.default_rng(seed)
    design, outcome, _ = generate(GeneratorSpec(
        n=n, beta_true=[beta], rate=0.1, seed=seed))
    noise = rng.standard_normal((n, n_noise))
    values = np.column_stack([design.values, noise])
    names = ["signal"] + [f"noise{j}" for j in range(n_noise)]
    meta = [ColumnMeta(name, "continuous") for name in names]
    return DesignMatrix(values, names, meta), outcome


class TestUnivariateFilter:
    def test_informative_feature_retained(self):
        design, outcome = informative_plus_noise(beta=1.0, seed=1)
        retained, stage = univariate_filter(design, outcome, alpha=0.01)
        assert "signal" in retained
        assert stage.p_values["signal"] < 1e-10

    def test_null_features_dropped_at_alpha_rate(self):
        # pure-noise features survive the filter with probability ~alpha
        kept_noise = 0
        total_noise = 0
        for seed in range(10):
            design, outcome = informative_plus_noise(n=2000, n_noise=20, seed=seed)
            retained, _ = univariate_filter(design, outcome, alpha=0.01)
            kept_noise += sum(1 for r in retained if r.startswith("noise"))
            total_noise += 20
        assert kept_noise / total_noise < 0.05  # ~0.01 expected

    def test_boundary_p_exactly_alpha_retained(self):
        design, outcome = informative_plus_noise(n=500, n_noise=2, seed=3)
        retained, stage = univariate_filter(design, outcome, alpha=1.0)
        # alpha = 1.0: p > 1.0 never true, everything with a fit survives
        assert set(retained) == set(design.column_names)

    def test_degenerate_column_dropped_with_reason(self):
        design, outcome = informative_plus_noise(n=300, n_noise=1, seed=4)
        values = design.values.copy()
        values[:, 1] = 5.0  # constant
        design = DesignMatrix(values, design.column_names, design.column_meta)
        retained, stage = univariate_filter(design, outcome)
        assert "noise0" not in retained
        reasons = {d["feature"]: d["reason"] for d in stage.detail}
        assert reasons["noise0"] == "degenerate"


class TestBackwardEliminate:
    def make_validation(self, seed, n=1000, n_noise=10, beta=1.0):
        tr_d, tr_o = informative_plus_noise(n=n, n_noise=n_noise, seed=seed,
                                            beta=beta)
        va_d, va_o = informative_plus_noise(n=n // 2, n_noise=n_noise,
                                            seed=seed + 1000, beta=beta)
        return tr_d, tr_o, va_d, va_o

    def test_removes_noise_keeps_signal(self):
        tr_d, tr_o, va_d, va_o = self.make_validation(seed=5)
        final, stage = backward_eliminate(tr_d, tr_o, va_d, va_o, tol=0.001)
        assert "signal" in final
        assert len([f for f in final if f.startswith("noise")]) <= 5

    def test_strong_features_not_removed(self):
        # every feature informative with a large effect: no commits happen
        design, outcome, _ = generate(GeneratorSpec(
            n=3000, beta_true=[1.0, -1.0, 0.8], rate=0.1, seed=6))
        vd, vo, _ = generate(GeneratorSpec(
            n=1500, beta_true=[1.0, -1.0, 0.8], rate=0.1, seed=7))
        final, stage = backward_eliminate(design, outcome, vd, vo, tol=0.001)
        assert set(final) == {"x0", "x1", "x2"}
        assert stage.removed == []

    def test_monotone_shrinkage_and_partition(self):
        tr_d, tr_o, va_d, va_o = self.make_validation(seed=8)
        final, stage = backward_eliminate(tr_d, tr_o, va_d, va_o)
        assert set(final) | set(stage.removed) == set(tr_d.column_names)
        assert set(final) & set(stage.removed) == set()

    def test_commits_respect_tolerance(self):
        tr_d, tr_o, va_d, va_o = self.make_validation(seed=9)
        _, stage = backward_eliminate(tr_d, tr_o, va_d, va_o, tol=0.001)
        for entry in stage.detail:
            if entry.get("result") == "committed":
                assert entry["c_before"] - entry["c_after"] < 0.001

    def test_deterministic(self):
        tr_d, tr_o, va_d, va_o = self.make_validation(seed=10)
        f1, _ = backward_eliminate(tr_d, tr_o, va_d, va_o)
        f2, _ = backward_eliminate(tr_d, tr_o, va_d, va_o)
        assert f1 == f2


class TestExclusionList:
    def test_empty_is_identity(self):
        features = ["a", "b", "c"]
        kept, stage = apply_exclusion_list(features, [])
        assert kept == features
        assert stage.removed == []

    def test_removes_listed(self):
        features = [f"f{i}" for i in range(50)]
        kept, stage = apply_exclusion_list(features, ["f3", "f17", "f42"])
        assert len(kept) == 47
        assert stage.removed == ["f3", "f17", "f42"]

    def test_unknown_name_warns_not_changes(self, caplog):
        import logging

        with caplog.at_level(logging.WARNING, logger="survwright.selection"):
            kept, stage = apply_exclusion_list(["a", "b"], ["zzz"])
        assert kept == ["a", "b"]
        assert "zzz" in caplog.text


class TestFullPipeline:
    @staticmethod
    def multi_signal(n, seed, n_noise=6):
        rng = np.random.default_rng(seed + 500)
        design, outcome, _ = generate(GeneratorSpec(
            n=n, beta_true=[0.9, -0.7, 0.5], rate=0.1, seed=seed))
        noise = rng.standard_normal((n, n_noise))
        names = ["s0", "s1", "s2"] + [f"noise{j}" for j in range(n_noise)]
        values = np.column_stack([design.values, noise])
        return DesignMatrix(values, names,
                            [ColumnMeta(nm, "continuous") for nm in names]), outcome

    def test_trace_shape_and_counts_line(self):
        tr_d, tr_o = self.multi_signal(1500, seed=11)
        va_d, va_o = self.multi_signal(700, seed=12)
        trace = select_features(tr_d, tr_o, va_d, va_o, exclusions=["signal_nope"])
        line = trace.counts_line()
        assert line.startswith("9 -> (-")
        assert line.endswith(f"{len(trace.final_features)}")
        assert [s.stage for s in trace.stages] == ["univariate", "backward",
                                                   "exclusion"]
        # stages partition the removed features
        removed = [f for s in trace.stages for f in s.removed]
        assert set(removed) | set(trace.final_features) == set(tr_d.column_names)
        assert len(removed) + len(trace.final_features) == len(tr_d.column_names)

    def test_trace_json_roundtrip(self, tmp_path):
        tr_d, tr_o = informative_plus_noise(n=800, n_noise=4, seed=13)
        va_d, va_o = informative_plus_noise(n=400, n_noise=4, seed=14)
        trace = select_features(tr_d, tr_o, va_d, va_o)
        path = tmp_path / "trace.json"
        trace.dump(path)
        import json

        doc = json.loads(path.read_text())
        assert doc["final_features"] == trace.final_features
        assert doc["initial_features"] == list(tr_d.column_names)

    def test_reduced_model_holds_cindex(self):
        from survwright.cox import fit_cox

        tr_d, tr_o = informative_plus_noise(n=3000, n_noise=20, seed=15)
        va_d, va_o = informative_plus_noise(n=1500, n_noise=20, seed=16)
        te_d, te_o = informative_plus_noise(n=1500, n_noise=20, seed=17)
        trace = select_features(tr_d, tr_o, va_d, va_o)
        full_fit = fit_cox(tr_d, tr_o)
        reduced_fit = fit_cox(tr_d.select(trace.final_features), tr_o)
        c_full = concordance_index(te_d.values @ full_fit.beta,
                                   te_o.duration, te_o.event)
        c_reduced = concordance_index(
            te_d.select(trace.final_features).values @ reduced_fit.beta,
            te_o.duration, te_o.event)
        assert c_reduced >= c_full - 0.005
