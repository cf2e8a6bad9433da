"""Cohort ingestion and preprocessing: load, derive, impute, encode, prune, split.

The pipeline mirrors a standard tabular survival workflow: raw CSV values are
parsed against a :class:`~survwright.schema.CohortSchema`, derived columns
(ratios, sums) are added, missing values are imputed with train-split
statistics, categorical/ordinal columns are one-hot encoded (full encoding,
no reference level dropped), continuous columns are z-scored with frozen
train statistics, and rare indicator columns are pruned.

Missing values are represented by ``None`` throughout; sentinel numbers are
never used.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .schema import CohortSchema, FeatureSpec

DAYS_PER_YEAR = 365.25


class CohortError(ValueError):
    """Raised for schema/CSV mismatches and unparseable cells."""


# ---------------------------------------------------------------------------
# Raw cohort
# ---------------------------------------------------------------------------

@dataclass
class RawCohort:
    """Columnar raw cohort; every column is a list with ``None`` marking missing."""

    schema: CohortSchema
    columns: dict[str, list]
    row_ids: list[str]
    extra: dict[str, list] = field(default_factory=dict)  # outcome/date columns

    @property
    def n_rows(self) -> int:
        return len(self.row_ids)

    def missing_counts(self) -> dict[str, int]:
        return {
            name: sum(v is None for v in vals) for name, vals in self.columns.items()
        }

    def subset(self, indices) -> "RawCohort":
        idx = list(indices)
        return RawCohort(
            schema=self.schema,
            columns={k: [v[i] for i in idx] for k, v in self.columns.items()},
            row_ids=[self.row_ids[i] for i in idx],
            extra={k: [v[i] for i in idx] for k, v in self.extra.items()},
        )


@dataclass
class QualityReport:
    """Ingestion/preprocessing audit trail, serializable as JSON."""

    n_rows: int = 0
    missing_by_column: dict[str, int] = field(default_factory=dict)
    zero_denominators: dict[str, int] = field(default_factory=dict)
    dropped_rare_columns: list[str] = field(default_factory=list)
    excluded_subjects: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "missing_by_column": self.missing_by_column,
            "zero_denominators": self.zero_denominators,
            "dropped_rare_columns": self.dropped_rare_columns,
            "excluded_subjects": self.excluded_subjects,
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_MISSING_TOKENS = ("", "NA")


def _parse_cell(text: str, spec: FeatureSpec, row: int):
    if text in _MISSING_TOKENS:
        return None
    if spec.kind in ("continuous", "derived"):
        try:
            value = float(text)
        except ValueError:
            raise CohortError(
                f"row {row}, column {spec.name!r}: cannot parse {text!r} as a number"
            ) from None
        if not math.isfinite(value):
            raise CohortError(f"row {row}, column {spec.name!r}: non-finite value {text!r}")
        return value
    if spec.kind == "binary":
        if text in ("0", "1"):
            return int(text)
        raise CohortError(
            f"row {row}, column {spec.name!r}: binary cell must be 0 or 1, got {text!r}"
        )
    # categorical / ordinal
    if text in spec.categories:
        return text
    raise CohortError(
        f"row {row}, column {spec.name!r}: {text!r} is not one of {list(spec.categories)}"
    )


def load_cohort(csv_source, schema: CohortSchema) -> RawCohort:
    """Parse a cohort CSV (RFC 4180, header required) against a schema.

    Empty cells and the literal ``NA`` become missing values.  The header
    must contain exactly the schema's raw feature names plus the outcome
    columns and optional id column; unknown or absent columns are errors
    naming the offending column.
    """
    if hasattr(csv_source, "read"):
        reader = csv.reader(csv_source)
        rows = list(reader)
    else:
        with open(csv_source, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    if not rows:
        raise CohortError("empty CSV: header row required")
    header = rows[0]
    body = rows[1:]

    raw_names = set(schema.raw_feature_names())
    outcome_cols = set(schema.outcome.csv_columns())
    allowed = raw_names | outcome_cols
    if schema.id_column:
        allowed.add(schema.id_column)

    for col in header:
        if col not in allowed:
            raise CohortError(f"unknown column {col!r} not in schema")
    for col in sorted(raw_names | outcome_cols):
        if col not in header:
            raise CohortError(f"schema column {col!r} missing from CSV header")

    col_index = {name: header.index(name) for name in header}
    columns: dict[str, list] = {name: [] for name in schema.raw_feature_names()}
    extra: dict[str, list] = {name: [] for name in outcome_cols}
    row_ids: list[str] = []

    for r, cells in enumerate(body, start=1):
        if len(cells) != len(header):
            raise CohortError(f"row {r}: expected {len(header)} cells, got {len(cells)}")
        for name in columns:
            spec = schema.feature(name)
            columns[name].append(_parse_cell(cells[col_index[name]], spec, r))
        for name in extra:
            text = cells[col_index[name]]
            extra[name].append(None if text in _MISSING_TOKENS else text)
        if schema.id_column:
            row_ids.append(cells[col_index[schema.id_column]])
        else:
            row_ids.append(f"r{r:06d}")

    return RawCohort(schema=schema, columns=columns, row_ids=row_ids, extra=extra)


# ---------------------------------------------------------------------------
# Derived features
# ---------------------------------------------------------------------------

def derive_features(raw: RawCohort, schema: CohortSchema | None = None,
                    report: QualityReport | None = None) -> RawCohort:
    """Add derived columns (ratio, sum).  A derived value is missing iff any
    input is missing; a zero ratio denominator yields missing and is counted
    in the quality report."""
    schema = schema or raw.schema
    columns = {k: list(v) for k, v in raw.columns.items()}
    for spec in schema.derived_features():
        values = []
        zero_den = 0
        inputs = [columns[name] for name in spec.inputs]
        for i in range(raw.n_rows):
            vals = [col[i] for col in inputs]
            if any(v is None for v in vals):
                values.append(None)
            elif spec.derivation == "ratio":
                num, den = vals
                if den == 0:
                    zero_den += 1
                    values.append(None)
                else:
                    values.append(num / den)
            else:  # sum
                values.append(float(sum(vals)))
        columns[spec.name] = values
        if report is not None and zero_den:
            report.zero_denominators[spec.name] = zero_den
    return RawCohort(schema=schema, columns=columns, row_ids=list(raw.row_ids),
                     extra={k: list(v) for k, v in raw.extra.items()})


# ---------------------------------------------------------------------------
# Imputation
# ---------------------------------------------------------------------------

def column_stats(source: RawCohort) -> dict[str, object]:
    """Imputation statistics per column: mean for continuous/derived,
    mode for binary/categorical/ordinal (ties broken by category order,
    then by value)."""
    stats: dict[str, object] = {}
    for name, values in source.columns.items():
        spec = source.schema.feature(name)
        present = [v for v in values if v is not None]
        if not present:
            raise CohortError(f"column {name!r} is entirely missing; cannot impute")
        if spec.kind in ("continuous", "derived"):
            stats[name] = float(np.mean(present))
        else:
            counts = Counter(present)
            best = max(counts.values())
            if spec.kind in ("categorical", "ordinal"):
                order = {c: i for i, c in enumerate(spec.categories)}
                stats[name] = min((v for v, c in counts.items() if c == best),
                                  key=lambda v: order[v])
            else:
                stats[name] = min(v for v, c in counts.items() if c == best)
    return stats


def impute_mean(raw: RawCohort, stats_source: RawCohort | dict | None = None) -> RawCohort:
    """Fill missing values with stats from ``stats_source`` (the train split).

    Continuous/derived columns take the source mean; binary, categorical and
    ordinal columns take the source mode (the mean of an indicator is not a
    valid category).  Non-missing values are never altered.
    """
    if stats_source is None:
        stats = column_stats(raw)
    elif isinstance(stats_source, dict):
        stats = stats_source
    else:
        stats = column_stats(stats_source)
    columns = {}
    for name, values in raw.columns.items():
        if name not in stats:
            raise CohortError(f"no imputation statistic for column {name!r}")
        fill = stats[name]
        columns[name] = [fill if v is None else v for v in values]
    return RawCohort(schema=raw.schema, columns=columns, row_ids=list(raw.row_ids),
                     extra={k: list(v) for k, v in raw.extra.items()})


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnMeta:
    """How one design-matrix column was produced from a raw feature."""

    source: str             # raw feature name
    kind: str               # continuous | binary | onehot
    level: str | None = None
    mean: float | None = None
    sd: float | None = None  # population sd (divide by N), frozen from fit data

    def to_dict(self) -> dict:
        d = {"source": self.source, "kind": self.kind}
        if self.level is not None:
            d["level"] = self.level
        if self.mean is not None:
            d["mean"] = self.mean
            d["sd"] = self.sd
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMeta":
        return cls(d["source"], d["kind"], d.get("level"), d.get("mean"), d.get("sd"))


@dataclass
class DesignMatrix:
    values: np.ndarray               # N x p float64, finite
    column_names: list[str]
    column_meta: list[ColumnMeta]

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]

    def select(self, names: list[str]) -> "DesignMatrix":
        idx = [self.column_names.index(n) for n in names]
        return DesignMatrix(self.values[:, idx], [self.column_names[i] for i in idx],
                            [self.column_meta[i] for i in idx])

    def subset_rows(self, indices) -> "DesignMatrix":
        idx = np.asarray(indices)
        return DesignMatrix(self.values[idx], list(self.column_names), list(self.column_meta))


@dataclass
class OutcomeColumn:
    duration: np.ndarray   # years, strictly positive
    event: np.ndarray      # bool

    def __post_init__(self):
        self.duration = np.asarray(self.duration, dtype=float)
        self.event = np.asarray(self.event, dtype=bool)
        if self.duration.shape != self.event.shape:
            raise CohortError("duration and event lengths differ")
        if not np.all(np.isfinite(self.duration)) or np.any(self.duration <= 0):
            raise CohortError("durations must be finite and strictly positive")

    @property
    def n(self) -> int:
        return self.duration.shape[0]

    def subset(self, indices) -> "OutcomeColumn":
        idx = np.asarray(indices)
        return OutcomeColumn(self.duration[idx], self.event[idx])


class UnseenLevelError(CohortError):
    """A categorical value at transform time was never seen at fit time."""


def fit_encoding_stats(raw: RawCohort) -> dict[str, dict]:
    """Compute the per-feature statistics ``encode`` freezes: z-score mean/sd
    for continuous columns (population sd, divide by N)."""
    stats: dict[str, dict] = {}
    for name, values in raw.columns.items():
        spec = raw.schema.feature(name)
        if spec.kind in ("continuous", "derived"):
            arr = np.asarray(values, dtype=float)
            if np.any(~np.isfinite(arr)):
                raise CohortError(f"column {name!r} has missing values; impute first")
            mean = float(arr.mean())
            sd = float(arr.std())  # population sd
            stats[name] = {"mean": mean, "sd": sd}
    return stats


def encode(raw: RawCohort, schema: CohortSchema | None = None,
           fit_stats: dict[str, dict] | None = None, strict: bool = True) -> DesignMatrix:
    """Turn an imputed raw cohort into a numeric design matrix.

    Categorical/ordinal features expand to one column per level (full
    one-hot); binary features pass through as {0,1}; continuous/derived
    features are z-scored with ``fit_stats`` when given (train statistics)
    or their own mean/sd otherwise.  Unseen categorical levels raise in
    strict mode and produce an all-zero row across the feature's columns in
    lenient mode.
    """
    schema = schema or raw.schema
    if fit_stats is None:
        fit_stats = fit_encoding_stats(raw)
    n = raw.n_rows
    cols: list[np.ndarray] = []
    names: list[str] = []
    meta: list[ColumnMeta] = []
    for spec in schema.features:
        values = raw.columns[spec.name]
        if any(v is None for v in values):
            raise CohortError(f"column {spec.name!r} has missing values; impute first")
        if spec.kind in ("continuous", "derived"):
            st = fit_stats.get(spec.name)
            if st is None:
                raise CohortError(f"no encoding stats for continuous column {spec.name!r}")
            arr = np.asarray(values, dtype=float)
            sd = st["sd"]
            scaled = (arr - st["mean"]) / sd if sd > 0 else np.zeros(n)
            cols.append(scaled)
            names.append(spec.name)
            meta.append(ColumnMeta(spec.name, "continuous", mean=st["mean"], sd=sd))
        elif spec.kind == "binary":
            cols.append(np.asarray(values, dtype=float))
            names.append(spec.name)
            meta.append(ColumnMeta(spec.name, "binary"))
        else:  # categorical / ordinal -> full one-hot
            known = set(spec.categories)
            for i, v in enumerate(values):
                if v not in known:
                    if strict:
                        raise UnseenLevelError(
                            f"column {spec.name!r}: unseen level {v!r} at row {i}"
                        )
            for level in spec.categories:
                cols.append(np.asarray([1.0 if v == level else 0.0 for v in values]))
                names.append(f"{spec.name}={level}")
                meta.append(ColumnMeta(spec.name, "onehot", level=level))
    values_matrix = np.column_stack(cols) if cols else np.empty((n, 0))
    if values_matrix.size and not np.all(np.isfinite(values_matrix)):
        raise CohortError("non-finite entries after encoding")
    return DesignMatrix(values_matrix, names, meta)


def prune_rare(design: DesignMatrix, min_prevalence: float = 0.002,
               report: QualityReport | None = None) -> DesignMatrix:
    """Drop binary/one-hot columns whose positive prevalence is strictly
    below ``min_prevalence`` (default 0.2%).  Continuous columns are never
    touched."""
    keep: list[int] = []
    dropped: list[str] = []
    for j, m in enumerate(design.column_meta):
        if m.kind in ("binary", "onehot"):
            prevalence = float(np.mean(design.values[:, j] == 1.0))
            if prevalence < min_prevalence:
                dropped.append(design.column_names[j])
                continue
        keep.append(j)
    if report is not None:
        report.dropped_rare_columns.extend(dropped)
    return DesignMatrix(design.values[:, keep],
                        [design.column_names[j] for j in keep],
                        [design.column_meta[j] for j in keep])


# ---------------------------------------------------------------------------
# Outcomes from dates
# ---------------------------------------------------------------------------

def _as_days(value) -> int:
    """Dates are days-since-epoch integers; ISO strings and dates convert."""
    if isinstance(value, int):
        return value
    if isinstance(value, _dt.date):
        return value.toordinal()
    return _dt.date.fromisoformat(str(value)).toordinal()


def build_outcome(event_dates: list[list], assessment_dates: list,
                  admin_censor_date, death_dates: list | None = None,
                  report: QualityReport | None = None,
                  row_ids: list[str] | None = None):
    """Compute durations (years) and event flags from dates.

    Per subject: follow-up ends at the earliest of (first event date after
    assessment, death date, administrative censor date); the event flag is
    true iff that minimum is an event date.  Subjects with any event date on
    or before their assessment date are excluded (pre-existing disease), not
    errors.  Returns ``(OutcomeColumn, included_indices)``.
    """
    censor = _as_days(admin_censor_date)
    n = len(assessment_dates)
    death_dates = death_dates or [None] * n
    durations, events, included = [], [], []
    for i in range(n):
        assess = _as_days(assessment_dates[i])
        if censor < assess:
            raise CohortError(f"subject {i}: admin censor date precedes assessment")
        dates = [_as_days(d) for d in (event_dates[i] or []) if d is not None]
        if any(d <= assess for d in dates):
            if report is not None:
                report.excluded_subjects.append({
                    "row": row_ids[i] if row_ids else i,
                    "reason": "event on or before assessment",
                })
            continue
        end = censor
        is_event = False
        death = death_dates[i]
        if death is not None:
            death = _as_days(death)
            if death <= assess:
                raise CohortError(f"subject {i}: non-monotone dates (death before assessment)")
            end = min(end, death)
        future = [d for d in dates if d > assess]
        if future and min(future) <= end:
            end = min(future)
            is_event = True
        durations.append((end - assess) / DAYS_PER_YEAR)
        events.append(is_event)
        included.append(i)
    return OutcomeColumn(np.array(durations), np.array(events)), included


def outcome_from_columns(raw: RawCohort) -> OutcomeColumn:
    """Read the outcome straight from duration/event CSV columns."""
    spec = raw.schema.outcome
    if spec.mode != "columns":
        raise CohortError("schema outcome is date-based; use build_outcome")
    durations = []
    events = []
    for i in range(raw.n_rows):
        d = raw.extra[spec.duration_column][i]
        e = raw.extra[spec.event_column][i]
        if d is None or e is None:
            raise CohortError(f"row {i}: missing outcome value")
        durations.append(float(d))
        if e not in ("0", "1"):
            raise CohortError(f"row {i}: event flag must be 0 or 1, got {e!r}")
        events.append(e == "1")
    return OutcomeColumn(np.array(durations), np.array(events))


def apply_exclusion_rules(raw: RawCohort, report: QualityReport | None = None) -> RawCohort:
    """Drop subjects matching the schema's prior-condition rules."""
    drop = set()
    for rule in raw.schema.exclusion_rules:
        spec = raw.schema.feature(rule.feature)
        target = _parse_cell(rule.value, spec, -1)
        for i, v in enumerate(raw.columns[rule.feature]):
            if v == target and i not in drop:
                drop.add(i)
                if report is not None:
                    report.excluded_subjects.append(
                        {"row": raw.row_ids[i], "reason": rule.reason}
                    )
    keep = [i for i in range(raw.n_rows) if i not in drop]
    return raw.subset(keep)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def stratified_split(outcome: OutcomeColumn, fraction: float = 0.75,
                     seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (A, B) with |A| about ``fraction`` of the whole,
    stratified on the event flag.  Deterministic for a fixed seed."""
    if not 0 < fraction < 1:
        raise CohortError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    a_parts, b_parts = [], []
    for flag in (False, True):
        members = np.flatnonzero(outcome.event == flag)
        if members.size == 0:
            raise CohortError(f"empty stratum: event={flag}")
        if members.size < 2:
            raise CohortError(f"stratum event={flag} needs >=2 subjects")
        perm = rng.permutation(members)
        cut = int(round(fraction * members.size))
        cut = min(max(cut, 1), members.size - 1)
        a_parts.append(perm[:cut])
        b_parts.append(perm[cut:])
    a = np.sort(np.concatenate(a_parts))
    b = np.sort(np.concatenate(b_parts))
    return a, b


# ---------------------------------------------------------------------------
# Cohort summary (demographics table)
# ---------------------------------------------------------------------------

def _quartile_text(values: list[float]) -> str:
    med, q1, q3 = (np.median(values), np.percentile(values, 25),
                   np.percentile(values, 75))
    return f"{med:.2f} [{q1:.2f},{q3:.2f}]"


def summarize_cohort(raw: RawCohort, outcome: OutcomeColumn) -> list[dict]:
    """Per-feature comparison of event vs non-event groups.

    Continuous features report median [Q1,Q3] per group with a
    Kruskal-Wallis p-value; binary/categorical/ordinal features report
    count (%) per level with a chi-squared p-value (no continuity
    correction).  Degenerate contingency tables (a zero expected count)
    report the p-value as None.
    """
    if outcome.n != raw.n_rows:
        raise CohortError("outcome length does not match cohort")
    groups = {False: np.flatnonzero(~outcome.event), True: np.flatnonzero(outcome.event)}
    if any(len(idx) == 0 for idx in groups.values()):
        raise CohortError("both event and non-event groups must be non-empty")
    rows: list[dict] = []
    for spec in raw.schema.features:
        values = raw.columns[spec.name]
        if spec.kind in ("continuous", "derived"):
            samples = {
                flag: [values[i] for i in idx if values[i] is not None]
                for flag, idx in groups.items()
            }
            try:
                _, p = _stats.kruskal(samples[False], samples[True])
                p = float(p)
            except ValueError:
                p = None
            present = [v for v in values if v is not None]
            rows.append({
                "feature": spec.name, "kind": spec.kind, "test": "kruskal-wallis",
                "all": _quartile_text(present),
                "no_event": _quartile_text(samples[False]),
                "event": _quartile_text(samples[True]),
                "p_value": p,
            })
        else:
            levels = list(spec.categories) if spec.categories else [0, 1]
            group_vals = {
                flag: [values[i] for i in idx if values[i] is not None]
                for flag, idx in groups.items()
            }
            table = np.array([
                [sum(v == level for v in group_vals[flag]) for flag in (False, True)]
                for level in levels
            ], dtype=float)
            counts_text = {}
            for flag, key in ((False, "no_event"), (True, "event")):
                vals = group_vals[flag]
                total = len(vals)
                if spec.kind == "binary":
                    k = sum(v == 1 for v in vals)
                    counts_text[key] = f"{k} ({100 * k / total:.2f})" if total else "0"
                else:
                    counts_text[key] = "; ".join(
                        f"{level}: {sum(v == level for v in vals)}"
                        f" ({100 * sum(v == level for v in vals) / total:.2f})"
                        for level in levels
                    )
            rows.append({
                "feature": spec.name, "kind": spec.kind, "test": "chi-squared",
                "no_event": counts_text["no_event"], "event": counts_text["event"],
                "p_value": _chi2_p(table),
            })
    return rows


def _chi2_p(table: np.ndarray) -> float | None:
    table = table[table.sum(axis=1) > 0]
    if table.shape[0] < 2:
        return None
    expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
    if np.any(expected == 0):
        return None
    stat, p, _, _ = _stats.chi2_contingency(table, correction=False)
    return float(p)
