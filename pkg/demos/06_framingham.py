"""Score a cohort with the published Framingham general-CVD formula and
compare it against models trained on the cohort itself.

Inputs are derived from raw columns by fixed rules (mmol/L -> mg/dL at
38.67, SBP averaged and routed by treatment flag, current-smoker category,
diabetes censored to pre-assessment diagnoses); rows missing any required
value are excluded, as the replication protocol demands.
"""

import tempfile

import numpy as np

from survwright.cox import fit_cox, predict_risk_batch
from survwright.framingham import (
    compare_scores,
    derive_framingham_inputs,
    framingham_design,
    framingham_risk,
    framingham_risks,
    load_coefficients,
)
from survwright.framingham import FraminghamInput
from survwright.pipeline import prepare_cohort
from survwright.schema import CohortSchema
from survwright.synth import generate_cohort_like_paper, paper_like_template

coeffs = load_coefficients()
print("coefficients:", coeffs.provenance, "\n")

# a single profile, by hand
profile = FraminghamInput(sex="male", age=61, total_cholesterol=180.0,
                          hdl_cholesterol=47.0, sbp=124.0, sbp_treated=False,
                          current_smoker=True, diabetes=False)
print(f"61-year-old male smoker: {100 * framingham_risk(profile, coeffs):.1f}% "
      "10-year risk\n")

# whole-cohort comparison on synthetic data
workdir = tempfile.mkdtemp(prefix="survwright_demo_")
generate_cohort_like_paper(paper_like_template(n=4000, seed=3), out_dir=workdir)
schema = CohortSchema.load(f"{workdir}/schema.json")
prepared = prepare_cohort(f"{workdir}/cohort.csv", schema, seed=3)

inputs, kept, excluded = derive_framingham_inputs(prepared.test_raw)
print(f"derived inputs for {len(inputs)} test subjects "
      f"({len(excluded)} excluded for missing values)")

outcome = prepared.test_outcome.subset(kept)
sex_female = np.array([inp.sex == "female" for inp in inputs])
scores = {"framingham_formula": framingham_risks(inputs, coeffs)}

# second arm: re-train a Cox model on the same seven variables, per sex
refit_design = framingham_design(inputs)
refit = np.empty(len(inputs))
for mask in (~sex_female, sex_female):
    idx = np.flatnonzero(mask)
    fit = fit_cox(refit_design.subset_rows(idx), outcome.subset(idx))
    refit[idx] = predict_risk_batch(fit, refit_design.values[idx], 10.0)
scores["refit_cox_same_variables"] = refit

print("\nscore                          men     women   all")
for row in compare_scores(scores, outcome, sex_female):
    print(f"{row['score']:<28}  {row['men']:.4f}  {row['women']:.4f}  "
          f"{row['all']:.4f}")
