"""Deployable model bundles: a fitted model plus everything needed to score
raw feature maps exactly the way training did.

A bundle freezes the cohort schema, the train-split imputation statistics,
and the encoding statistics, so the serve-time preprocessing path is the
same code path as training.  The ``digital`` variant structurally excludes
cholesterol-tagged and SBP-tagged features (heart rate stands in for blood
pressure); that invariant is checked at load time.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field

import numpy as np

from . import cox as _cox
from . import neural as _neural
from .cohort import RawCohort, derive_features, encode, impute_mean
from .schema import CohortSchema

BUNDLE_VERSION = 1

VARIANTS = ("full", "digital")
SEX_SCOPES = ("all", "male", "female")

# feature tags stripped from the digital variant / required in it
DIGITAL_EXCLUDED_TAGS = ("cholesterol", "sbp")
DIGITAL_REQUIRED_TAG = "heart_rate"


class BundleError(ValueError):
    pass


class MissingFeaturesError(BundleError):
    """Strict-mode scoring refused because required raw features are absent."""

    def __init__(self, names: list[str]):
        super().__init__(f"missing required features: {names}")
        self.names = names


def variant_schema(schema: CohortSchema, variant: str) -> CohortSchema:
    """Apply the variant's structural feature filter to a schema."""
    if variant not in VARIANTS:
        raise BundleError(f"unknown variant {variant!r}")
    if variant == "full":
        return schema
    excluded = {f.name for f in schema.features
                if any(t in f.tags for t in DIGITAL_EXCLUDED_TAGS)}
    # derived features lose their inputs too
    for f in schema.features:
        if f.kind == "derived" and any(i in excluded for i in f.inputs):
            excluded.add(f.name)
    reduced = schema.drop_features(excluded)
    if not reduced.features_with_tag(DIGITAL_REQUIRED_TAG):
        raise BundleError("digital variant requires a heart_rate-tagged feature")
    return reduced


def check_variant_invariant(schema: CohortSchema, variant: str) -> None:
    if variant != "digital":
        return
    bad = [f.name for f in schema.features
           if any(t in f.tags for t in DIGITAL_EXCLUDED_TAGS)]
    if bad:
        raise BundleError(f"digital bundle contains excluded features: {bad}")
    if not schema.features_with_tag(DIGITAL_REQUIRED_TAG):
        raise BundleError("digital bundle is missing a heart_rate-tagged feature")


@dataclass
class ModelBundle:
    model: "_cox.CoxFit | _neural.NeuralCoxModel"
    schema: CohortSchema
    impute_stats: dict
    encoding_stats: dict[str, dict]
    variant: str = "full"
    sex_scope: str = "all"
    version: str = "1"
    created_at: str = field(default_factory=lambda: _dt.datetime.now(
        _dt.timezone.utc).isoformat(timespec="seconds"))

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise BundleError(f"unknown variant {self.variant!r}")
        if self.sex_scope not in SEX_SCOPES:
            raise BundleError(f"unknown sex scope {self.sex_scope!r}")
        check_variant_invariant(self.schema, self.variant)
        missing = [c for c in self.model_columns
                   if self._column_source(c) not in set(self.schema.feature_names)]
        if missing:
            raise BundleError(f"model columns not covered by schema: {missing}")

    @staticmethod
    def _column_source(column: str) -> str:
        return column.split("=", 1)[0]

    @property
    def model_kind(self) -> str:
        return "cox" if isinstance(self.model, _cox.CoxFit) else "neural_cox"

    @property
    def model_columns(self) -> list[str]:
        if isinstance(self.model, _cox.CoxFit):
            return list(self.model.column_names)
        return list(self.model.input_columns)

    # -- scoring ------------------------------------------------------------

    def _encode_request(self, features: dict, lenient: bool):
        """Run one feature map through the training preprocessing path."""
        missing_raw = [name for name in self.schema.raw_feature_names()
                       if features.get(name) is None]
        flags = []
        if missing_raw:
            if not lenient:
                raise MissingFeaturesError(missing_raw)
            flags.append(f"imputed: {sorted(missing_raw)}")
        columns = {}
        for name in self.schema.raw_feature_names():
            value = features.get(name)
            spec = self.schema.feature(name)
            if value is not None:
                if spec.kind in ("continuous",):
                    value = float(value)
                elif spec.kind == "binary":
                    value = int(value)
                    if value not in (0, 1):
                        raise BundleError(f"feature {name!r} must be 0 or 1")
                else:
                    value = str(value)
                    if value not in spec.categories:
                        raise BundleError(
                            f"feature {name!r}: unknown level {value!r}")
            columns[name] = [value]
        raw = RawCohort(schema=self.schema, columns=columns, row_ids=["request"])
        # same order as training: derive, impute with frozen stats, encode
        raw = derive_features(raw, self.schema)
        raw = impute_mean(raw, self.impute_stats)
        design = encode(raw, self.schema, fit_stats=self.encoding_stats)
        x = design.select(self.model_columns).values[0]
        return x, flags

    def score(self, features: dict, horizon: float = 10.0,
              lenient: bool = False) -> dict:
        """Risk plus per-raw-feature linear-predictor contributions.

        Contributions (Cox only) sum the per-column x*beta terms over each
        source feature's encoded columns, so they add up to the linear
        predictor exactly.  Neural bundles report contributions as
        unavailable.
        """
        x, flags = self._encode_request(features, lenient)
        if isinstance(self.model, _cox.CoxFit):
            risk = _cox.predict_risk(self.model, x, horizon)
            terms = x * self.model.beta
            contributions: dict[str, float] | None = {}
            for col, term in zip(self.model_columns, terms):
                src = self._column_source(col)
                contributions[src] = contributions.get(src, 0.0) + float(term)
            linear = float(x @ self.model.beta)
            baseline = self.model.baseline_cumhaz
        else:
            risk = _neural.predict_risk(self.model, x, horizon)
            contributions = None
            linear = float(_neural.predict_log_risk(self.model, x[None, :])[0])
            baseline = self.model.baseline_cumhaz
        if baseline is not None and baseline.extrapolates(horizon):
            flags = flags + ["extrapolated beyond last observed time"]
        return {
            "risk": float(risk),
            "linear_predictor": linear,
            "contributions": contributions,
            "model_version": self.version,
            "model_kind": self.model_kind,
            "variant": self.variant,
            "horizon_years": horizon,
            "flags": flags,
        }

    def whatif(self, features: dict, overrides: dict, horizon: float = 10.0,
               lenient: bool = False) -> dict:
        """Score a base request and the same request with overrides applied;
        the delta is modified risk minus base risk."""
        known = set(self.schema.feature_names)
        unknown = [k for k in overrides if k not in known]
        if unknown:
            raise BundleError(f"unknown override features: {sorted(unknown)}")
        base = self.score(features, horizon=horizon, lenient=lenient)
        modified = self.score({**features, **overrides}, horizon=horizon,
                              lenient=lenient)
        return {
            "base": base,
            "modified": modified,
            "delta": modified["risk"] - base["risk"],
        }

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "bundle_version": BUNDLE_VERSION,
            "model_kind": self.model_kind,
            "variant": self.variant,
            "sex_scope": self.sex_scope,
            "version": self.version,
            "created_at": self.created_at,
            "schema": self.schema.to_dict(),
            "impute_stats": self.impute_stats,
            "encoding_stats": self.encoding_stats,
            "model": self.model.to_dict(),
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        version = d.get("bundle_version")
        if version != BUNDLE_VERSION:
            raise BundleError(
                f"bundle_version {version!r} needs migration (expected {BUNDLE_VERSION})")
        kind = d["model_kind"]
        if kind == "cox":
            model = _cox.CoxFit.from_dict(d["model"])
        elif kind == "neural_cox":
            model = _neural.NeuralCoxModel.from_dict(d["model"])
        else:
            raise BundleError(f"unknown model_kind {kind!r}")
        return cls(
            model=model,
            schema=CohortSchema.from_dict(d["schema"]),
            impute_stats=d["impute_stats"],
            encoding_stats=d["encoding_stats"],
            variant=d["variant"],
            sex_scope=d.get("sex_scope", "all"),
            version=d.get("version", "1"),
            created_at=d.get("created_at", ""),
        )

    @classmethod
    def load(cls, path) -> "ModelBundle":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise BundleError(f"corrupt bundle document: {exc}") from exc
        return cls.from_dict(doc)


def serialize_model(bundle: ModelBundle) -> str:
    return json.dumps(bundle.to_dict())


def deserialize_model(document: str) -> ModelBundle:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise BundleError(f"corrupt bundle document: {exc}") from exc
    return ModelBundle.from_dict(doc)


def feature_descriptors(bundle: ModelBundle) -> list[dict]:
    """Client-facing form descriptors for the bundle's raw features."""
    out = []
    for spec in bundle.schema.features:
        if spec.kind == "derived":
            continue
        desc = {
            "name": spec.name,
            "kind": spec.kind,
            "label": spec.label or spec.name.replace("_", " "),
            "unit": spec.unit,
            "modifiable": "modifiable" in spec.tags,
            "required": True,
        }
        if spec.categories:
            desc["options"] = list(spec.categories)
        out.append(desc)
    return out
