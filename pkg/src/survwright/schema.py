"""Declarative cohort schemas: feature descriptions, outcome wiring, exclusion rules.

A schema is the single source of truth for how a raw CSV becomes a design
matrix: which columns exist, how each is typed and encoded, which columns are
derived from which, and where the survival outcome comes from.  Schemas are
plain JSON documents (versioned with ``schema_version``) so they can be
authored and reviewed outside the code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

SCHEMA_VERSION = 1

FEATURE_KINDS = ("continuous", "binary", "categorical", "ordinal", "derived")
DERIVATIONS = ("ratio", "sum")


class SchemaError(ValueError):
    """Raised when a schema document is internally inconsistent."""


@dataclass(frozen=True)
class FeatureSpec:
    """Description of one raw (or derived) cohort column.

    ``tags`` are free-form role markers consumed downstream: ``cholesterol``
    and ``sbp`` columns are stripped from the digital model variant,
    ``heart_rate`` must be present in it, ``sex`` selects sex-specific
    training scopes, and ``modifiable`` flags what-if toggles for clients.
    """

    name: str
    kind: str
    categories: tuple[str, ...] = ()
    derivation: str | None = None
    inputs: tuple[str, ...] = ()
    unit: str = ""
    tags: tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.kind not in FEATURE_KINDS:
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind in ("categorical", "ordinal") and len(self.categories) < 2:
            raise SchemaError(f"feature {self.name!r}: {self.kind} needs >=2 categories")
        if self.kind == "derived":
            if self.derivation not in DERIVATIONS:
                raise SchemaError(
                    f"feature {self.name!r}: derived needs a derivation in {DERIVATIONS}"
                )
            if not self.inputs:
                raise SchemaError(f"feature {self.name!r}: derived needs input names")
            if self.derivation == "ratio" and len(self.inputs) != 2:
                raise SchemaError(f"feature {self.name!r}: ratio takes exactly 2 inputs")

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.categories:
            d["categories"] = list(self.categories)
        if self.derivation:
            d["derivation"] = self.derivation
            d["inputs"] = list(self.inputs)
        if self.unit:
            d["unit"] = self.unit
        if self.tags:
            d["tags"] = list(self.tags)
        if self.label:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            categories=tuple(d.get("categories", ())),
            derivation=d.get("derivation"),
            inputs=tuple(d.get("inputs", ())),
            unit=d.get("unit", ""),
            tags=tuple(d.get("tags", ())),
            label=d.get("label", ""),
        )


@dataclass(frozen=True)
class OutcomeSpec:
    """Where survival outcomes come from.

    Two modes:

    * ``columns`` mode: the cohort CSV already carries a duration column
      (years) and an event flag column.
    * ``dates`` mode: the CSV carries per-subject event dates (possibly
      several columns), an assessment date, an optional death date, and the
      schema fixes a single administrative censor date.  Durations are
      computed by :func:`survwright.cohort.build_outcome`.
    """

    duration_column: str | None = None
    event_column: str | None = None
    event_date_columns: tuple[str, ...] = ()
    assessment_date_column: str | None = None
    death_date_column: str | None = None
    admin_censor_date: str | None = None  # ISO date, shared by the cohort

    def __post_init__(self):
        columns_mode = self.duration_column is not None or self.event_column is not None
        dates_mode = bool(self.event_date_columns)
        if columns_mode == dates_mode:
            raise SchemaError("outcome must be either duration/event columns or event dates")
        if columns_mode and not (self.duration_column and self.event_column):
            raise SchemaError("columns-mode outcome needs both duration and event columns")
        if dates_mode and not (self.assessment_date_column and self.admin_censor_date):
            raise SchemaError(
                "dates-mode outcome needs assessment_date_column and admin_censor_date"
            )

    @property
    def mode(self) -> str:
        return "columns" if self.duration_column else "dates"

    def csv_columns(self) -> tuple[str, ...]:
        if self.mode == "columns":
            return (self.duration_column, self.event_column)
        cols = list(self.event_date_columns) + [self.assessment_date_column]
        if self.death_date_column:
            cols.append(self.death_date_column)
        return tuple(cols)

    def to_dict(self) -> dict:
        if self.mode == "columns":
            return {"duration_column": self.duration_column, "event_column": self.event_column}
        d = {
            "event_date_columns": list(self.event_date_columns),
            "assessment_date_column": self.assessment_date_column,
            "admin_censor_date": self.admin_censor_date,
        }
        if self.death_date_column:
            d["death_date_column"] = self.death_date_column
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeSpec":
        return cls(
            duration_column=d.get("duration_column"),
            event_column=d.get("event_column"),
            event_date_columns=tuple(d.get("event_date_columns", ())),
            assessment_date_column=d.get("assessment_date_column"),
            death_date_column=d.get("death_date_column"),
            admin_censor_date=d.get("admin_censor_date"),
        )


@dataclass(frozen=True)
class ExclusionRule:
    """Drop subjects whose raw ``feature`` equals ``value`` (prior-condition rules)."""

    feature: str
    value: str
    reason: str = "prior condition"

    def to_dict(self) -> dict:
        return {"feature": self.feature, "value": self.value, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: dict) -> "ExclusionRule":
        return cls(d["feature"], d["value"], d.get("reason", "prior condition"))


@dataclass(frozen=True)
class CohortSchema:
    features: tuple[FeatureSpec, ...]
    outcome: OutcomeSpec
    exclusion_rules: tuple[ExclusionRule, ...] = ()
    id_column: str | None = None

    def __post_init__(self):
        names = [f.name for f in self.features]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate feature names: {sorted(dupes)}")
        known = set(names)
        for f in self.features:
            for inp in f.inputs:
                if inp not in known:
                    raise SchemaError(
                        f"derived feature {f.name!r} references unknown input {inp!r}"
                    )
        for rule in self.exclusion_rules:
            if rule.feature not in known:
                raise SchemaError(f"exclusion rule references unknown feature {rule.feature!r}")

    def feature(self, name: str) -> FeatureSpec:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def raw_feature_names(self) -> tuple[str, ...]:
        """Names expected in the CSV (everything except derived columns)."""
        return tuple(f.name for f in self.features if f.kind != "derived")

    def derived_features(self) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if f.kind == "derived")

    def features_with_tag(self, tag: str) -> tuple[FeatureSpec, ...]:
        return tuple(f for f in self.features if tag in f.tags)

    def drop_features(self, names: set[str]) -> "CohortSchema":
        """Schema with the named features (and rules touching them) removed."""
        kept = tuple(f for f in self.features if f.name not in names)
        rules = tuple(r for r in self.exclusion_rules if r.feature not in names)
        return CohortSchema(kept, self.outcome, rules, self.id_column)

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "features": [f.to_dict() for f in self.features],
            "outcome": self.outcome.to_dict(),
        }
        if self.exclusion_rules:
            d["exclusion_rules"] = [r.to_dict() for r in self.exclusion_rules]
        if self.id_column:
            d["id_column"] = self.id_column
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CohortSchema":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        return cls(
            features=tuple(FeatureSpec.from_dict(f) for f in d["features"]),
            outcome=OutcomeSpec.from_dict(d["outcome"]),
            exclusion_rules=tuple(
                ExclusionRule.from_dict(r) for r in d.get("exclusion_rules", ())
            ),
            id_column=d.get("id_column"),
        )

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path) -> "CohortSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
