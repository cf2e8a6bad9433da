"""Framingham general-CVD 10-year risk as a comparison baseline.

The score is the published sex-specific Cox formula over log-transformed
continuous terms and binary indicators:

    risk = 1 - S0(10) ** exp(L - Lbar)

where L is the linear predictor, Lbar its population mean, and S0(10) the
10-year baseline survival.  Coefficients are loaded from an editable JSON
file with provenance (see ``data/framingham_coefficients.json``) and
validated at load time; they are deliberately not hardcoded.

Input derivation from a raw cohort row follows fixed rules: cholesterol
converts from mmol/L to mg/dL with the exact factor 38.67, systolic blood
pressure is the mean of the available readings and routes to the treated or
untreated coefficient by the medication flag, smoking maps the current-
smoker category to a binary, and the diabetes flag ignores diagnoses dated
after the assessment.  Rows missing any required value are excluded with a
reason rather than raising.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .cohort import ColumnMeta, DesignMatrix, OutcomeColumn, RawCohort
from .metrics import concordance_index

MMOL_TO_MGDL = 38.67

_REQUIRED_TERMS = (
    "ln_age", "ln_total_cholesterol", "ln_hdl_cholesterol",
    "ln_sbp_untreated", "ln_sbp_treated", "current_smoker", "diabetes",
)


class FraminghamError(ValueError):
    pass


@dataclass(frozen=True)
class SexCoefficients:
    coefficients: dict[str, float]
    mean_linear_predictor: float
    baseline_survival_10y: float


@dataclass(frozen=True)
class CoefficientSet:
    male: SexCoefficients
    female: SexCoefficients
    provenance: str

    def for_sex(self, sex: str) -> SexCoefficients:
        if sex not in ("male", "female"):
            raise FraminghamError(f"sex must be 'male' or 'female', got {sex!r}")
        return self.male if sex == "male" else self.female

    def to_dict(self) -> dict:
        return {
            "provenance": self.provenance,
            "male": {
                "coefficients": self.male.coefficients,
                "mean_linear_predictor": self.male.mean_linear_predictor,
                "baseline_survival_10y": self.male.baseline_survival_10y,
            },
            "female": {
                "coefficients": self.female.coefficients,
                "mean_linear_predictor": self.female.mean_linear_predictor,
                "baseline_survival_10y": self.female.baseline_survival_10y,
            },
        }


def _parse_sex_block(d: dict, sex: str) -> SexCoefficients:
    if "baseline_survival_10y" not in d:
        raise FraminghamError(f"{sex} block missing baseline_survival_10y")
    s0 = float(d["baseline_survival_10y"])
    if not 0.0 < s0 < 1.0:
        raise FraminghamError(f"{sex} baseline survival {s0} outside (0, 1)")
    coefs = {k: float(v) for k, v in d["coefficients"].items()}
    missing = [t for t in _REQUIRED_TERMS if t not in coefs]
    if missing:
        raise FraminghamError(f"{sex} block missing coefficients: {missing}")
    return SexCoefficients(coefs, float(d["mean_linear_predictor"]), s0)


def load_coefficients(path=None) -> CoefficientSet:
    """Load and validate a coefficient file; defaults to the bundled set."""
    if path is None:
        text = resources.files("survwright").joinpath(
            "data/framingham_coefficients.json").read_text(encoding="utf-8")
        doc = json.loads(text)
    else:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    for sex in ("male", "female"):
        if sex not in doc:
            raise FraminghamError(f"missing sex block: {sex}")
    return CoefficientSet(
        male=_parse_sex_block(doc["male"], "male"),
        female=_parse_sex_block(doc["female"], "female"),
        provenance=doc.get("provenance", "unspecified"),
    )


def dump_coefficients(coeffs: CoefficientSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(coeffs.to_dict(), fh, indent=2)


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------

@dataclass
class FraminghamInput:
    sex: str                      # "male" | "female"
    age: float                    # years
    total_cholesterol: float      # mg/dL
    hdl_cholesterol: float        # mg/dL
    sbp: float                    # mmHg
    sbp_treated: bool
    current_smoker: bool
    diabetes: bool


@dataclass(frozen=True)
class FraminghamFieldMap:
    """Which cohort columns feed each score input.

    ``sex_female_field`` is a binary column (1 = female).  Cholesterol
    fields are in mmol/L and get converted.  ``sbp_fields`` are averaged.
    ``smoker_level`` is the current-smoker category of ``smoking_field``.
    Diabetes is a binary flag column, optionally censored by a diagnosis
    date against the assessment date.
    """

    sex_female_field: str = "sex_female"
    age_field: str = "age"
    total_cholesterol_field: str = "total_cholesterol"
    hdl_cholesterol_field: str = "hdl_cholesterol"
    sbp_fields: tuple[str, ...] = ("sbp",)
    bp_medication_field: str = "bp_medication"
    smoking_field: str = "smoking_status"
    smoker_level: str = "current"
    diabetes_field: str = "diabetes"
    diabetes_date_field: str | None = None
    assessment_date_field: str | None = None


def _date_column(raw: RawCohort, name: str) -> list:
    if name in raw.extra:
        return raw.extra[name]
    if name in raw.columns:
        return raw.columns[name]
    raise FraminghamError(f"cohort is missing date column {name!r}")


def derive_framingham_inputs(raw: RawCohort, field_map: FraminghamFieldMap | None = None
                             ) -> tuple[list[FraminghamInput], list[int], list[dict]]:
    """Build score inputs from raw cohort rows.

    Returns ``(inputs, row_indices, excluded)``; rows with any missing
    required value are excluded with a reason.
    """
    fm = field_map or FraminghamFieldMap()
    required = [fm.sex_female_field, fm.age_field, fm.total_cholesterol_field,
                fm.hdl_cholesterol_field, *fm.sbp_fields, fm.bp_medication_field,
                fm.smoking_field, fm.diabetes_field]
    for name in required:
        if name not in raw.columns:
            raise FraminghamError(f"cohort is missing required column {name!r}")
    inputs: list[FraminghamInput] = []
    kept: list[int] = []
    excluded: list[dict] = []
    for i in range(raw.n_rows):
        row = {name: raw.columns[name][i] for name in required}
        missing = [name for name, v in row.items() if v is None]
        if missing:
            excluded.append({"row": raw.row_ids[i], "reason": f"missing {missing}"})
            continue
        diabetes = bool(row[fm.diabetes_field])
        if diabetes and fm.diabetes_date_field and fm.assessment_date_field:
            diag = _date_column(raw, fm.diabetes_date_field)[i]
            assess = _date_column(raw, fm.assessment_date_field)[i]
            # ISO dates compare lexicographically; a post-assessment
            # diagnosis does not count
            if diag is not None and assess is not None and str(diag) > str(assess):
                diabetes = False
        inputs.append(FraminghamInput(
            sex="female" if row[fm.sex_female_field] == 1 else "male",
            age=float(row[fm.age_field]),
            total_cholesterol=float(row[fm.total_cholesterol_field]) * MMOL_TO_MGDL,
            hdl_cholesterol=float(row[fm.hdl_cholesterol_field]) * MMOL_TO_MGDL,
            sbp=float(np.mean([row[f] for f in fm.sbp_fields])),
            sbp_treated=bool(row[fm.bp_medication_field]),
            current_smoker=row[fm.smoking_field] == fm.smoker_level,
            diabetes=diabetes,
        ))
        kept.append(i)
    return inputs, kept, excluded


# ---------------------------------------------------------------------------
# Risk evaluation
# ---------------------------------------------------------------------------

def linear_predictor(inp: FraminghamInput, coeffs: CoefficientSet) -> float:
    block = coeffs.for_sex(inp.sex)
    c = block.coefficients
    for field_name, value in (("age", inp.age),
                              ("total_cholesterol", inp.total_cholesterol),
                              ("hdl_cholesterol", inp.hdl_cholesterol),
                              ("sbp", inp.sbp)):
        if value <= 0:
            raise FraminghamError(f"log term requires positive {field_name}, got {value}")
    sbp_coef = c["ln_sbp_treated"] if inp.sbp_treated else c["ln_sbp_untreated"]
    return (c["ln_age"] * math.log(inp.age)
            + c["ln_total_cholesterol"] * math.log(inp.total_cholesterol)
            + c["ln_hdl_cholesterol"] * math.log(inp.hdl_cholesterol)
            + sbp_coef * math.log(inp.sbp)
            + c["current_smoker"] * float(inp.current_smoker)
            + c["diabetes"] * float(inp.diabetes))


def framingham_risk(inp: FraminghamInput, coeffs: CoefficientSet) -> float:
    """10-year probability: 1 - S0(10) ** exp(L - Lbar)."""
    block = coeffs.for_sex(inp.sex)
    centered = linear_predictor(inp, coeffs) - block.mean_linear_predictor
    return 1.0 - block.baseline_survival_10y ** math.exp(centered)


def framingham_risks(inputs: list[FraminghamInput], coeffs: CoefficientSet) -> np.ndarray:
    return np.array([framingham_risk(inp, coeffs) for inp in inputs])


# ---------------------------------------------------------------------------
# Refit arm and comparison report
# ---------------------------------------------------------------------------

def framingham_design(inputs: list[FraminghamInput]) -> DesignMatrix:
    """The published model's seven columns, for retraining a Cox model on
    the local cohort: ln(age), ln(TC), ln(HDL), ln(SBP) split by treatment,
    smoker, diabetes."""
    rows = []
    for inp in inputs:
        ln_sbp = math.log(inp.sbp)
        rows.append([
            math.log(inp.age),
            math.log(inp.total_cholesterol),
            math.log(inp.hdl_cholesterol),
            0.0 if inp.sbp_treated else ln_sbp,
            ln_sbp if inp.sbp_treated else 0.0,
            float(inp.current_smoker),
            float(inp.diabetes),
        ])
    names = list(_REQUIRED_TERMS)
    return DesignMatrix(np.asarray(rows, dtype=float), names,
                        [ColumnMeta(n, "continuous") for n in names])


def compare_scores(score_risks: dict[str, np.ndarray], outcome: OutcomeColumn,
                   sex_female: np.ndarray) -> list[dict]:
    """Table of c-indices per score, for men, women, and all participants
    (the pooled value concatenates the sex-specific risk vectors)."""
    sex_female = np.asarray(sex_female, dtype=bool)
    report = []
    for score, risks in score_risks.items():
        risks = np.asarray(risks, dtype=float)
        row = {"score": score}
        for label, mask in (("men", ~sex_female), ("women", sex_female),
                            ("all", np.ones_like(sex_female))):
            try:
                row[label] = concordance_index(risks[mask], outcome.duration[mask],
                                               outcome.event[mask])
            except Exception:
                row[label] = None
        report.append(row)
    return report
