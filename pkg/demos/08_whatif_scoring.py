"""Bundle a trained model and explore what-if scenarios the way the scoring
service does: pre-encoding feature maps in, risks and per-feature
contributions out, overrides producing deltas.
"""

import tempfile

from survwright.pipeline import prepare_cohort, train_cox_bundle
from survwright.schema import CohortSchema
from survwright.synth import generate_cohort_like_paper, paper_like_template

workdir = tempfile.mkdtemp(prefix="survwright_demo_")
generate_cohort_like_paper(paper_like_template(n=4000, seed=5), out_dir=workdir)
schema = CohortSchema.load(f"{workdir}/schema.json")

# the digital variant: no cholesterol, heart rate instead of blood pressure
prepared = prepare_cohort(f"{workdir}/cohort.csv", schema,
                          variant="digital", seed=5)
bundle = train_cox_bundle(prepared, version="demo")
print(f"digital bundle: {len(bundle.model_columns)} columns "
      f"(no cholesterol/SBP, heart rate present)\n")

subject = {
    "age": 62.0, "sex_female": 0, "heart_rate": 74.0,
    "waist": 102.0, "hip": 104.0, "pack_years": 25.0,
    "smoking_status": "current", "walking_pace": "slow",
    "self_rated_health": "fair", "adds_salt": 1,
    "outdoor_hours_winter": 1.0, "takes_supplements": 0,
    "diabetes": 0, "bp_medication": 1, "rare_condition": 0,
    "beer_weekly": 8.0, "wine_weekly": 2.0, "spirits_weekly": 2.0,
}
base = bundle.score(subject)
print(f"base 10-year risk: {100 * base['risk']:.1f}%")
print("largest contributions to the linear predictor:")
ranked = sorted(base["contributions"].items(), key=lambda kv: -abs(kv[1]))
for name, value in ranked[:6]:
    print(f"  {name:<22} {value:+.3f}")

print("\nwhat-if scenarios:")
for label, overrides in [
    ("quits smoking", {"smoking_status": "never"}),
    ("walks briskly", {"walking_pace": "brisk"}),
    ("stops adding salt", {"adds_salt": 0}),
    ("all three", {"smoking_status": "never", "walking_pace": "brisk",
                   "adds_salt": 0}),
]:
    result = bundle.whatif(subject, overrides)
    print(f"  {label:<18} {100 * result['base']['risk']:.1f}% -> "
          f"{100 * result['modified']['risk']:.1f}%  "
          f"(delta {100 * result['delta']:+.2f} points)")
