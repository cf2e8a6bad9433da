"""Two-stage data-driven feature reduction plus a manual exclusion list.

Stage one fits a one-feature Cox model per column and drops columns whose
Wald p-value exceeds the significance threshold (strictly greater; the
boundary survives).  Stage two is batched backward elimination: features are
ranked by Wald |z| ascending, the weakest batch is tentatively removed, the
model is refit, and the removal is committed only when the held-out
concordance drops by less than the tolerance; otherwise the batch is halved
and retried.  The procedure stops when removing the single weakest feature
already costs too much.  Stage three removes an explicit name list (e.g.
clinician review).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .cohort import DesignMatrix, OutcomeColumn
from .cox import CoxError, fit_cox, summarize
from .metrics import concordance_index

logger = logging.getLogger(__name__)


@dataclass
class SelectionStage:
    stage: str
    removed: list[str]
    c_index_before: float | None = None
    c_index_after: float | None = None
    p_values: dict[str, float] = field(default_factory=dict)
    detail: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "removed": self.removed,
            "c_index_before": self.c_index_before,
            "c_index_after": self.c_index_after,
            "p_values": self.p_values,
            "detail": self.detail,
        }


@dataclass
class SelectionTrace:
    initial_features: list[str]
    stages: list[SelectionStage] = field(default_factory=list)
    final_features: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "initial_features": self.initial_features,
            "stages": [s.to_dict() for s in self.stages],
            "final_features": self.final_features,
        }

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def counts_line(self) -> str:
        """Pipeline shape, e.g. '50 -> (-3 univariate) -> (-12 backward) -> 35'."""
        parts = [str(len(self.initial_features))]
        for s in self.stages:
            parts.append(f"(-{len(s.removed)} {s.stage})")
        parts.append(str(len(self.final_features)))
        return " -> ".join(parts)


def univariate_filter(design: DesignMatrix, outcome: OutcomeColumn,
                      alpha: float = 0.01) -> tuple[list[str], SelectionStage]:
    """Keep features whose single-feature Cox Wald p-value is <= alpha.

    Features whose univariate fit fails (constant columns and other
    degeneracies) are dropped with reason 'degenerate' rather than raising.
    """
    retained: list[str] = []
    stage = SelectionStage(stage="univariate", removed=[])
    for name in design.column_names:
        sub = design.select([name])
        try:
            fit = fit_cox(sub, outcome)
        except CoxError as exc:
            stage.removed.append(name)
            stage.detail.append({"feature": name, "reason": "degenerate",
                                 "error": str(exc)})
            continue
        p = summarize(fit).rows[0].p_value
        stage.p_values[name] = p
        if p > alpha:
            stage.removed.append(name)
            stage.detail.append({"feature": name, "reason": f"p>{alpha}", "p": p})
        else:
            retained.append(name)
    return retained, stage


def _fit_and_score(design: DesignMatrix, outcome: OutcomeColumn,
                   val_design: DesignMatrix, val_outcome: OutcomeColumn,
                   features: list[str]):
    fit = fit_cox(design.select(features), outcome)
    eta = val_design.select(features).values @ fit.beta
    c = concordance_index(eta, val_outcome.duration, val_outcome.event)
    return fit, c


def backward_eliminate(design: DesignMatrix, outcome: OutcomeColumn,
                       val_design: DesignMatrix, val_outcome: OutcomeColumn,
                       tol: float = 0.001, initial_batch: int | None = None
                       ) -> tuple[list[str], SelectionStage]:
    """Batched backward elimination guarded by held-out concordance.

    Each round ranks current features by Wald |z| ascending and tentatively
    drops the weakest batch (initially ``max(1, remaining // 8)`` unless
    given).  The drop is committed when the validation c-index falls by less
    than ``tol``; otherwise the batch is halved.  A failing batch of one
    ends the procedure.
    """
    features = list(design.column_names)
    if len(features) < 2:
        raise CoxError("backward elimination needs >= 2 features")
    stage = SelectionStage(stage="backward", removed=[])
    fit, current_c = _fit_and_score(design, outcome, val_design, val_outcome, features)
    stage.c_index_before = current_c

    batch = initial_batch if initial_batch else max(1, len(features) // 8)
    batch = min(batch, len(features) - 1)
    while len(features) > 1:
        se = fit.standard_errors()
        z = np.abs(fit.beta) / np.where(se > 0, se, np.inf)
        order = np.argsort(z, kind="stable")
        candidates = [features[i] for i in order[:batch]]
        trial_features = [f for f in features if f not in candidates]
        try:
            trial_fit, trial_c = _fit_and_score(design, outcome, val_design,
                                                val_outcome, trial_features)
        except CoxError as exc:
            stage.detail.append({"tried": candidates, "result": "fit failed",
                                 "error": str(exc)})
            if batch == 1:
                break
            batch = max(1, batch // 2)
            continue
        drop = current_c - trial_c
        if drop < tol:
            stage.detail.append({"tried": candidates, "result": "committed",
                                 "c_before": current_c, "c_after": trial_c})
            features = trial_features
            fit, current_c = trial_fit, trial_c
            stage.removed.extend(candidates)
            if len(features) <= 1:
                break
            batch = min(max(1, len(features) // 8), len(features) - 1)
        else:
            stage.detail.append({"tried": candidates, "result": "rejected",
                                 "c_before": current_c, "c_after": trial_c})
            if batch == 1:
                break
            batch = max(1, batch // 2)
    stage.c_index_after = current_c
    return features, stage


def apply_exclusion_list(features: list[str], exclusions: list[str]
                         ) -> tuple[list[str], SelectionStage]:
    """Remove explicitly listed names; unknown names warn and are ignored."""
    stage = SelectionStage(stage="exclusion", removed=[])
    known = set(features)
    for name in exclusions:
        if name in known:
            stage.removed.append(name)
        else:
            logger.warning("exclusion list names unknown feature %r", name)
            stage.detail.append({"feature": name, "reason": "unknown, ignored"})
    kept = [f for f in features if f not in set(stage.removed)]
    return kept, stage


def select_features(design: DesignMatrix, outcome: OutcomeColumn,
                    val_design: DesignMatrix, val_outcome: OutcomeColumn,
                    alpha: float = 0.01, tol: float = 0.001,
                    exclusions: list[str] | None = None,
                    initial_batch: int | None = None) -> SelectionTrace:
    """Full pipeline: univariate filter, backward elimination, exclusion list."""
    trace = SelectionTrace(initial_features=list(design.column_names))
    retained, stage1 = univariate_filter(design, outcome, alpha=alpha)
    trace.stages.append(stage1)
    if len(retained) >= 2:
        kept, stage2 = backward_eliminate(design.select(retained), outcome,
                                          val_design, val_outcome, tol=tol,
                                          initial_batch=initial_batch)
        trace.stages.append(stage2)
    else:
        kept = retained
    if exclusions:
        kept, stage3 = apply_exclusion_list(kept, exclusions)
        trace.stages.append(stage3)
    trace.final_features = kept
    return trace
