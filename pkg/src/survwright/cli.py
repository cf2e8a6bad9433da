"""Command-line pipeline: synth, ingest, select, train, eval, framingham,
search, serve.

Every subcommand takes --seed, prints machine-readable JSON on stdout on
success, and exits nonzero with an error JSON on stderr on failure.  Log
level comes from the SURVWRIGHT_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from . import cox as _cox
from . import neural as _neural
from .bundle import ModelBundle
from .framingham import (
    compare_scores,
    derive_framingham_inputs,
    framingham_design,
    framingham_risks,
    load_coefficients,
)
from .metrics import calibration_to_csv, evaluate
from .pipeline import prepare_cohort, predict_test_risks, train_cox_bundle, train_neural_bundle
from .schema import CohortSchema
from .search import DEFAULT_SPACE, search as run_search
from .selection import select_features
from .service import bundle_id, serve
from .synth import (
    GeneratorSpec,
    generate,
    generate_cohort_like_paper,
    paper_like_template,
    write_cohort_csv,
)

logger = logging.getLogger(__name__)

# the paper-reported winning configuration for the reduced feature set;
# used as the default deepsurv config when no search result is supplied
DEFAULT_DEEPSURV_CONFIG = {
    "activation": "relu",
    "batch_norm": True,
    "dropout": 0.3338,
    "weight_decay": 0.0596,
    "learning_rate": 0.000309,
    "optimizer": "adam",
    "topology": "32x32",
}


def _emit(payload: dict) -> None:
    json.dump(payload, sys.stdout, indent=2, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _store_paths(store: str) -> tuple[str, str]:
    return os.path.join(store, "cohort.csv"), os.path.join(store, "schema.json")


def _prepare_from_args(args) -> tuple:
    csv_path, schema_path = _store_paths(args.store)
    schema = CohortSchema.load(schema_path)
    prepared = prepare_cohort(csv_path, schema, variant=args.variant,
                              sex_scope=args.sex, seed=args.seed)
    return schema, prepared


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> dict:
    if args.template == "paper-like":
        template = paper_like_template(n=args.n, seed=args.seed)
        schema, rows, truth = generate_cohort_like_paper(template, out_dir=args.out)
        return {"out": args.out, "n": len(rows), "template": "paper-like",
                "event_fraction": truth["event_fraction"]}
    spec = GeneratorSpec(n=args.n, beta_true=json.loads(args.beta),
                         rate=args.rate, censor_time=args.censor_time,
                         seed=args.seed)
    design, outcome, truth = generate(spec)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i in range(design.n_rows):
        row = {"subject_id": f"s{i + 1:06d}"}
        for j, name in enumerate(design.column_names):
            row[name] = f"{design.values[i, j]:.10g}"
        row["duration_years"] = f"{outcome.duration[i]:.10g}"
        row["event"] = str(int(outcome.event[i]))
        rows.append(row)
    from .schema import FeatureSpec, OutcomeSpec

    schema = CohortSchema(
        tuple(FeatureSpec(n, "continuous") for n in design.column_names),
        OutcomeSpec(duration_column="duration_years", event_column="event"),
        id_column="subject_id")
    write_cohort_csv(args.out, schema, rows, truth.to_dict())
    return {"out": args.out, "n": design.n_rows,
            "event_fraction": float(outcome.event.mean())}


def cmd_ingest(args) -> dict:
    schema = CohortSchema.load(args.schema)
    prepared = prepare_cohort(args.csv, schema, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    import shutil

    shutil.copyfile(args.csv, os.path.join(args.out, "cohort.csv"))
    schema.dump(os.path.join(args.out, "schema.json"))
    prepared.report.dump(os.path.join(args.out, "quality_report.json"))
    return {
        "out": args.out,
        "n_rows": prepared.report.n_rows,
        "n_train": prepared.train_design.n_rows,
        "n_test": prepared.test_design.n_rows,
        "encoded_columns": prepared.train_design.n_cols,
        "dropped_rare_columns": prepared.report.dropped_rare_columns,
        "excluded_subjects": len(prepared.report.excluded_subjects),
    }


def cmd_select(args) -> dict:
    _, prepared = _prepare_from_args(args)
    tr_d, tr_o, va_d, va_o = prepared.validation_split(seed=args.seed)
    exclusions = []
    if args.exclude_file:
        with open(args.exclude_file, encoding="utf-8") as fh:
            exclusions = [line.strip() for line in fh if line.strip()]
    trace = select_features(tr_d, tr_o, va_d, va_o, alpha=args.alpha,
                            tol=args.cindex_tol, exclusions=exclusions)
    if args.out:
        trace.dump(args.out)
    return {"pipeline": trace.counts_line(),
            "final_features": trace.final_features,
            "stages": [{"stage": s.stage, "removed": len(s.removed)}
                       for s in trace.stages],
            "trace_file": args.out}


def cmd_train(args) -> dict:
    _, prepared = _prepare_from_args(args)
    features = None
    if args.features_file:
        with open(args.features_file, encoding="utf-8") as fh:
            doc = json.load(fh)
            features = doc["final_features"] if isinstance(doc, dict) else doc
    if args.model == "cox":
        bundle = train_cox_bundle(prepared, features=features,
                                  version=args.version, ridge=args.ridge)
    else:
        config_doc = DEFAULT_DEEPSURV_CONFIG
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                config_doc = json.load(fh)
        config = _neural.HyperConfig.from_dict(config_doc)
        bundle = train_neural_bundle(prepared, config, features=features,
                                     seed=args.seed, max_epochs=args.max_epochs,
                                     version=args.version)
    bundle.dump(args.out)
    result = {
        "bundle": args.out,
        "id": bundle_id(bundle),
        "model": args.model,
        "variant": args.variant,
        "sex_scope": args.sex,
        "n_train": prepared.train_design.n_rows,
        "columns": bundle.model_columns,
    }
    if args.model == "cox":
        summary = _cox.summarize(bundle.model)
        result["coefficients"] = summary.to_records()
        if args.summary_csv:
            summary.to_csv(args.summary_csv)
    return result


def cmd_eval(args) -> dict:
    bundle = ModelBundle.load(args.bundle)
    csv_path, schema_path = _store_paths(args.store)
    schema = CohortSchema.load(schema_path)
    prepared = prepare_cohort(csv_path, schema, variant=bundle.variant,
                              sex_scope=bundle.sex_scope, seed=args.seed)
    risks = predict_test_risks(bundle, prepared, horizon=args.horizon)
    report = evaluate(risks, prepared.test_outcome.duration,
                      prepared.test_outcome.event, horizon=args.horizon,
                      bootstrap_rounds=args.bootstrap_rounds, seed=args.seed)
    if args.calibration_csv:
        calibration_to_csv(report.calibration_bins, args.calibration_csv)
    return {"bundle": args.bundle, "id": bundle_id(bundle), **report.to_dict()}


def cmd_framingham(args) -> dict:
    csv_path, schema_path = _store_paths(args.store)
    schema = CohortSchema.load(schema_path)
    coeffs = load_coefficients(args.coeffs)
    prepared = prepare_cohort(csv_path, schema, seed=args.seed)
    raw = prepared.test_raw
    outcome = prepared.test_outcome
    inputs, kept, excluded = derive_framingham_inputs(raw)
    risks = framingham_risks(inputs, coeffs)
    if args.action == "score":
        return {
            "provenance": coeffs.provenance,
            "n_scored": len(inputs),
            "n_excluded": len(excluded),
            "mean_risk": float(risks.mean()),
            "risks": [{"row": raw.row_ids[i], "risk": float(r)}
                      for i, r in zip(kept, risks)][: args.limit],
        }
    # compare: formula-based vs Cox refit on the same seven variables,
    # refit sex-specifically like the published score
    sub_outcome = outcome.subset(kept)
    sex_female = np.array([inp.sex == "female" for inp in inputs])
    scores = {"framingham_formula": risks}
    refit_design = framingham_design(inputs)
    refit_risks = np.full(len(inputs), np.nan)
    try:
        for mask in (~sex_female, sex_female):
            idx = np.flatnonzero(mask)
            fit = _cox.fit_cox(refit_design.subset_rows(idx),
                               sub_outcome.subset(idx))
            refit_risks[mask] = _cox.predict_risk_batch(
                fit, refit_design.values[mask], args.horizon)
        scores["framingham_refit_cox"] = refit_risks
    except _cox.CoxError as exc:
        logger.warning("refit arm skipped: %s", exc)
    report = compare_scores(scores, sub_outcome, sex_female)
    return {"provenance": coeffs.provenance, "comparison": report,
            "n_scored": len(inputs), "n_excluded": len(excluded)}


def cmd_search(args) -> dict:
    _, prepared = _prepare_from_args(args)
    tr_d, tr_o, va_d, va_o = prepared.validation_split(seed=args.seed)
    log_fh = open(args.trials, "w", encoding="utf-8") if args.trials else None
    try:
        best_config, best_model, records = run_search(
            tr_d, tr_o, va_d, va_o, budget=args.budget, seed=args.seed,
            space=DEFAULT_SPACE, max_epochs=args.max_epochs, trial_log=log_fh)
    finally:
        if log_fh:
            log_fh.close()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(best_config.to_dict(), fh, indent=2)
    best = min((r for r in records if r.failure is None), key=lambda r: r.val_loss)
    return {
        "budget": args.budget,
        "best_config": best_config.to_dict(),
        "best_val_loss": best.val_loss,
        "best_val_cindex": best.val_cindex,
        "failed_trials": sum(1 for r in records if r.failure),
        "config_file": args.out,
        "trials_file": args.trials,
    }


def cmd_serve(args) -> dict:
    bundles = [ModelBundle.load(path) for path in args.bundle]
    serve(bundles, bind=args.bind, static_dir=args.static_dir)
    return {"stopped": True}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survwright",
        description="Survival-risk modeling pipeline and scoring service")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--template", choices=["paper-like", "linear"], default="paper-like")
    p.add_argument("--beta", default="[0.5, -0.5, 0.0]",
                   help="true coefficients (linear template)")
    p.add_argument("--rate", type=float, default=0.1)
    p.add_argument("--censor-time", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="validate a CSV + schema into a store")
    p.add_argument("--csv", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("select", help="run the feature-selection pipeline")
    p.add_argument("--store", required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--cindex-tol", type=float, default=0.001)
    p.add_argument("--exclude-file")
    p.add_argument("--variant", choices=["full", "digital"], default="full")
    p.add_argument("--sex", choices=["all", "male", "female"], default="all")
    p.add_argument("--out", help="selection trace JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="train a model bundle")
    p.add_argument("--store", required=True)
    p.add_argument("--model", choices=["cox", "deepsurv"], default="cox")
    p.add_argument("--variant", choices=["full", "digital"], default="full")
    p.add_argument("--sex", choices=["all", "male", "female"], default="all")
    p.add_argument("--features-file", help="selection trace or JSON feature list")
    p.add_argument("--config", help="deepsurv hyperparameter config JSON")
    p.add_argument("--max-epochs", type=int, default=512)
    p.add_argument("--ridge", type=float, default=0.0)
    p.add_argument("--summary-csv", help="write coefficient table CSV (cox)")
    p.add_argument("--version", dest="version", default="1")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a bundle on the held-out test split")
    p.add_argument("--store", required=True)
    p.add_argument("--bundle", required=True)
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--bootstrap-rounds", type=int, default=50)
    p.add_argument("--calibration-csv")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("framingham", help="score or compare the Framingham baseline")
    p.add_argument("action", choices=["score", "compare"])
    p.add_argument("--store", required=True)
    p.add_argument("--coeffs", help="coefficient JSON (defaults to bundled set)")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--limit", type=int, default=20, help="max rows echoed by score")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_framingham)

    p = sub.add_parser("search", help="random hyperparameter search for deepsurv")
    p.add_argument("--store", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--variant", choices=["full", "digital"], default="full")
    p.add_argument("--sex", choices=["all", "male", "female"], default="all")
    p.add_argument("--max-epochs", type=int, default=512)
    p.add_argument("--trials", help="JSON-lines trial log path")
    p.add_argument("--out", help="best config JSON path")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("serve", help="run the HTTP scoring service")
    p.add_argument("--bundle", action="append", required=True)
    p.add_argument("--bind", default="127.0.0.1:8099")
    p.add_argument("--static-dir", help="serve a static UI from this directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("SURVWRIGHT_LOG", "WARNING").upper(),
                      logging.WARNING),
        stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - single exit point for the CLI
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
