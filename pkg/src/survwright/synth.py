"""Synthetic survival cohorts with known proportional-hazards ground truth.

Event times are drawn by inverse-transform sampling from the chosen baseline
hazard scaled by exp(x beta): for the exponential baseline with rate lam,
T = -ln(U) / (lam * exp(x beta)); for the Weibull baseline with shape k and
scale s, T = s * (-ln(U) / exp(x beta))**(1/k).  Censoring is either a fixed
administrative time (default 10 years, matching the evaluation horizon) or an
independent exponential time.

``generate`` returns encoded matrices for direct model verification;
``generate_cohort_like_paper`` emits a raw mixed-type cohort (continuous,
binary, categorical, derived inputs, missing cells) as CSV + schema JSON to
exercise the whole preprocessing path.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .cohort import ColumnMeta, DesignMatrix, OutcomeColumn
from .schema import CohortSchema, ExclusionRule, FeatureSpec, OutcomeSpec


@dataclass
class GeneratorSpec:
    n: int
    beta_true: np.ndarray
    baseline: str = "exponential"      # exponential | weibull
    rate: float = 0.1                  # events per year (exponential), 1/scale proxy
    weibull_shape: float = 1.5
    weibull_scale: float = 10.0
    censor_mode: str = "admin"         # admin | exponential
    censor_time: float = 10.0
    censor_rate: float = 0.05
    correlation: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        self.beta_true = np.asarray(self.beta_true, dtype=float)
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.baseline == "exponential" and self.rate <= 0:
            raise ValueError("rate must be positive")


@dataclass
class GroundTruth:
    beta: np.ndarray
    baseline: str
    rate: float
    column_names: list[str]
    seed: int

    def to_dict(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "baseline": self.baseline,
            "rate": self.rate,
            "column_names": self.column_names,
            "seed": self.seed,
        }


def generate(spec: GeneratorSpec) -> tuple[DesignMatrix, OutcomeColumn, GroundTruth]:
    """Sample a cohort under the spec's proportional-hazards model."""
    rng = np.random.default_rng(spec.seed)
    p = spec.beta_true.size
    if spec.correlation is not None:
        chol = np.linalg.cholesky(np.asarray(spec.correlation, dtype=float))
        X = rng.standard_normal((spec.n, p)) @ chol.T
    else:
        X = rng.standard_normal((spec.n, p))
    eta = X @ spec.beta_true
    u = rng.uniform(size=spec.n)
    if spec.baseline == "exponential":
        t_event = -np.log(u) / (spec.rate * np.exp(eta))
    elif spec.baseline == "weibull":
        t_event = spec.weibull_scale * (-np.log(u) / np.exp(eta)) ** (1.0 / spec.weibull_shape)
    else:
        raise ValueError(f"unknown baseline {spec.baseline!r}")
    if spec.censor_mode == "admin":
        t_censor = np.full(spec.n, spec.censor_time)
    elif spec.censor_mode == "exponential":
        t_censor = rng.exponential(1.0 / spec.censor_rate, size=spec.n)
    else:
        raise ValueError(f"unknown censor mode {spec.censor_mode!r}")
    duration = np.minimum(t_event, t_censor)
    event = t_event <= t_censor
    names = [f"x{j}" for j in range(p)]
    design = DesignMatrix(X, names, [ColumnMeta(n, "continuous", mean=0.0, sd=1.0)
                                     for n in names])
    outcome = OutcomeColumn(duration, event)
    truth = GroundTruth(spec.beta_true.copy(), spec.baseline, spec.rate, names, spec.seed)
    return design, outcome, truth


# ---------------------------------------------------------------------------
# Raw mixed-type cohorts (full-pipeline exercise)
# ---------------------------------------------------------------------------

@dataclass
class TemplateFeature:
    """One raw column of the paper-like template.

    ``effect`` is the true log-hazard per unit of the generator's internal
    standardized value (continuous), per indicator (binary), or per level
    (categorical/ordinal, mapping level -> effect).
    """

    name: str
    kind: str
    effect: float | dict = 0.0
    mean: float = 0.0
    sd: float = 1.0
    prevalence: float = 0.5
    categories: tuple[str, ...] = ()
    probs: tuple[float, ...] = ()
    missing_rate: float = 0.0
    tags: tuple[str, ...] = ()
    unit: str = ""
    low: float | None = None           # optional truncation bounds
    high: float | None = None


@dataclass
class CohortTemplate:
    n: int = 5000
    features: list[TemplateFeature] = field(default_factory=list)
    derived: list[FeatureSpec] = field(default_factory=list)
    derived_effects: dict[str, float] = field(default_factory=dict)
    baseline_rate: float = 0.012
    censor_time: float = 10.0
    seed: int = 0


def paper_like_template(n: int = 5000, seed: int = 0) -> CohortTemplate:
    """A compact cardiovascular-style cohort: demographics, blood pressure,
    cholesterol with a derived ratio, anthropometrics with a derived ratio,
    lifestyle categories, alcohol components with a derived sum, a rare
    condition to exercise pruning, and tagged roles for model variants."""
    features = [
        TemplateFeature("age", "continuous", effect=0.50, mean=57, sd=8,
                        low=37, high=73, unit="years"),
        TemplateFeature("sex_female", "binary", effect=-0.45, prevalence=0.56,
                        tags=("sex",)),
        TemplateFeature("sbp", "continuous", effect=0.35, mean=137.5, sd=18,
                        low=80, high=220, missing_rate=0.03, unit="mmHg",
                        tags=("sbp",)),
        TemplateFeature("heart_rate", "continuous", effect=0.10, mean=69.5, sd=10,
                        low=40, high=140, missing_rate=0.03, unit="bpm",
                        tags=("heart_rate",)),
        TemplateFeature("total_cholesterol", "continuous", effect=0.08, mean=5.77,
                        sd=1.1, low=2.0, high=12.0, missing_rate=0.06,
                        unit="mmol/L", tags=("cholesterol",)),
        TemplateFeature("hdl_cholesterol", "continuous", effect=0.0, mean=1.45,
                        sd=0.38, low=0.5, high=4.0, missing_rate=0.06,
                        unit="mmol/L", tags=("cholesterol",)),
        TemplateFeature("waist", "continuous", effect=0.0, mean=90, sd=13,
                        low=50, high=160, unit="cm"),
        TemplateFeature("hip", "continuous", effect=0.0, mean=103, sd=10,
                        low=60, high=170, unit="cm"),
        TemplateFeature("pack_years", "continuous", effect=0.18, mean=8, sd=11,
                        low=0, high=80, missing_rate=0.05, tags=("modifiable",)),
        TemplateFeature("smoking_status", "categorical",
                        effect={"never": -0.10, "previous": 0.0, "current": 0.30},
                        categories=("never", "previous", "current"),
                        probs=(0.56, 0.33, 0.11), tags=("modifiable",)),
        TemplateFeature("walking_pace", "categorical",
                        effect={"slow": 0.20, "steady": 0.0, "brisk": -0.20},
                        categories=("slow", "steady", "brisk"),
                        probs=(0.08, 0.52, 0.40), tags=("modifiable",)),
        TemplateFeature("self_rated_health", "ordinal",
                        effect={"poor": 0.25, "fair": 0.10, "good": 0.0,
                                "excellent": -0.20},
                        categories=("poor", "fair", "good", "excellent"),
                        probs=(0.04, 0.20, 0.59, 0.17)),
        TemplateFeature("adds_salt", "binary", effect=0.12, prevalence=0.05,
                        tags=("modifiable",)),
        TemplateFeature("outdoor_hours_winter", "continuous", effect=-0.05,
                        mean=1.7, sd=1.2, low=0, high=12, missing_rate=0.04,
                        tags=("modifiable",)),
        TemplateFeature("takes_supplements", "binary", effect=-0.04, prevalence=0.44,
                        tags=("modifiable",)),
        TemplateFeature("diabetes", "binary", effect=0.15, prevalence=0.043),
        TemplateFeature("bp_medication", "binary", effect=0.15, prevalence=0.17),
        TemplateFeature("rare_condition", "binary", effect=0.0, prevalence=0.001),
        TemplateFeature("beer_weekly", "continuous", effect=0.0, mean=2.5, sd=2.5,
                        low=0, high=40, tags=("modifiable",)),
        TemplateFeature("wine_weekly", "continuous", effect=0.0, mean=3.0, sd=3.0,
                        low=0, high=40, tags=("modifiable",)),
        TemplateFeature("spirits_weekly", "continuous", effect=0.0, mean=1.0, sd=1.8,
                        low=0, high=40, tags=("modifiable",)),
    ]
    derived = [
        FeatureSpec("cholesterol_ratio", "derived", derivation="ratio",
                    inputs=("total_cholesterol", "hdl_cholesterol"),
                    tags=("cholesterol",)),
        FeatureSpec("waist_hip_ratio", "derived", derivation="ratio",
                    inputs=("waist", "hip")),
        FeatureSpec("total_alcohol_weekly", "derived", derivation="sum",
                    inputs=("beer_weekly", "wine_weekly", "spirits_weekly"),
                    tags=("modifiable",)),
    ]
    derived_effects = {
        "cholesterol_ratio": 0.15,
        "waist_hip_ratio": 0.12,
        "total_alcohol_weekly": 0.05,
    }
    return CohortTemplate(n=n, features=features, derived=derived,
                          derived_effects=derived_effects, seed=seed)


def template_schema(template: CohortTemplate) -> CohortSchema:
    specs = []
    for f in template.features:
        specs.append(FeatureSpec(
            name=f.name, kind=f.kind, categories=f.categories,
            unit=f.unit, tags=f.tags,
        ))
    specs.extend(template.derived)
    outcome = OutcomeSpec(duration_column="duration_years", event_column="event")
    return CohortSchema(tuple(specs), outcome, id_column="subject_id")


def generate_cohort_like_paper(template: CohortTemplate, out_dir=None):
    """Sample raw values, compute the true linear predictor on the complete
    (pre-missingness) data, draw exponential survival times, then punch MCAR
    holes at the template's per-column rates.

    Returns ``(schema, rows, truth_dict)`` and, when ``out_dir`` is given,
    writes ``cohort.csv``, ``schema.json`` and ``ground_truth.json`` there.
    """
    rng = np.random.default_rng(template.seed)
    n = template.n
    schema = template_schema(template)

    raw: dict[str, np.ndarray] = {}
    eta = np.zeros(n)
    for f in template.features:
        if f.kind == "continuous":
            vals = rng.normal(f.mean, f.sd, size=n)
            if f.low is not None:
                vals = np.clip(vals, f.low, f.high)
            raw[f.name] = vals
            if f.effect:
                sd = vals.std() or 1.0
                eta += f.effect * (vals - vals.mean()) / sd
        elif f.kind == "binary":
            vals = (rng.uniform(size=n) < f.prevalence).astype(int)
            raw[f.name] = vals
            if f.effect:
                eta += f.effect * vals
        else:
            levels = np.array(f.categories)
            vals = rng.choice(levels, size=n, p=np.asarray(f.probs))
            raw[f.name] = vals
            effects = f.effect if isinstance(f.effect, dict) else {}
            for level, e in effects.items():
                eta += e * (vals == level)

    for spec in template.derived:
        if spec.derivation == "ratio":
            num, den = (raw[i] for i in spec.inputs)
            vals = num / den
        else:
            vals = np.sum([raw[i] for i in spec.inputs], axis=0)
        effect = template.derived_effects.get(spec.name, 0.0)
        if effect:
            sd = vals.std() or 1.0
            eta += effect * (vals - vals.mean()) / sd

    u = rng.uniform(size=n)
    t_event = -np.log(u) / (template.baseline_rate * np.exp(eta))
    duration = np.minimum(t_event, template.censor_time)
    event = (t_event <= template.censor_time).astype(int)

    rows = []
    for i in range(n):
        row = {"subject_id": f"s{i + 1:06d}"}
        for f in template.features:
            if f.missing_rate and rng.uniform() < f.missing_rate:
                row[f.name] = ""
            else:
                v = raw[f.name][i]
                if f.kind == "continuous":
                    row[f.name] = f"{float(v):.6g}"
                elif f.kind == "binary":
                    row[f.name] = str(int(v))
                else:
                    row[f.name] = str(v)
        row["duration_years"] = f"{duration[i]:.8g}"
        row["event"] = str(int(event[i]))
        rows.append(row)

    truth = {
        "seed": template.seed,
        "baseline_rate": template.baseline_rate,
        "censor_time": template.censor_time,
        "event_fraction": float(event.mean()),
        "effects": {
            f.name: (f.effect if not isinstance(f.effect, dict) else f.effect)
            for f in template.features
        },
        "derived_effects": template.derived_effects,
    }
    if out_dir is not None:
        write_cohort_csv(out_dir, schema, rows, truth)
    return schema, rows, truth


def write_cohort_csv(out_dir, schema: CohortSchema, rows: list[dict], truth: dict | None = None):
    import os

    os.makedirs(out_dir, exist_ok=True)
    header = [schema.id_column] + list(schema.raw_feature_names()) + \
        list(schema.outcome.csv_columns())
    csv_path = os.path.join(out_dir, "cohort.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)
    schema.dump(os.path.join(out_dir, "schema.json"))
    if truth is not None:
        with open(os.path.join(out_dir, "ground_truth.json"), "w", encoding="utf-8") as fh:
            json.dump(truth, fh, indent=2)
    return csv_path
