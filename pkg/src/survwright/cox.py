"""Cox proportional-hazards fitting by Newton ascent on the partial likelihood.

Tied event times are handled with the Efron correction by default (Breslow is
available for cross-checking).  All likelihood quantities are computed fully
vectorized over the flattened (event time, tie index) grid, so fitting scales
as O(N p + K p^2) per Newton iteration with K the number of unique event
times.  The linear predictor is centered by its maximum before
exponentiation; the partial likelihood and all derivatives are exactly
invariant under that shift.
"""

from __future__ import annotations

import csv as _csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as _linalg
from scipy import stats as _stats

from .cohort import DesignMatrix, OutcomeColumn

# Two-sided 95% normal quantile, fixed rather than recomputed.
CI_MULTIPLIER = 1.959964

_RIDGE_LADDER = (1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class CoxError(RuntimeError):
    pass


class CoxSingularityError(CoxError):
    """Hessian not invertible even after ridge escalation (separation or
    rank deficiency, e.g. a constant column)."""


class CoxConvergenceError(CoxError):
    def __init__(self, message, beta=None):
        super().__init__(message)
        self.beta = beta


# ---------------------------------------------------------------------------
# Step functions (baseline cumulative hazard, survival curves)
# ---------------------------------------------------------------------------

@dataclass
class StepFunction:
    """Right-continuous step function: value jumps AT each time point."""

    times: np.ndarray
    values: np.ndarray
    initial: float = 0.0
    t_max: float | None = None  # last observed follow-up, for extrapolation checks

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values must align")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        padded = np.concatenate(([self.initial], self.values))
        out = padded[idx]
        return float(out) if out.ndim == 0 else out

    def extrapolates(self, t: float) -> bool:
        return self.t_max is not None and t > self.t_max

    def to_pairs(self) -> list[list[float]]:
        return [[float(t), float(v)] for t, v in zip(self.times, self.values)]

    @classmethod
    def from_pairs(cls, pairs, initial=0.0, t_max=None) -> "StepFunction":
        arr = np.asarray(pairs, dtype=float)
        if arr.size == 0:
            return cls(np.empty(0), np.empty(0), initial, t_max)
        return cls(arr[:, 0], arr[:, 1], initial, t_max)


# ---------------------------------------------------------------------------
# Partial likelihood core
# ---------------------------------------------------------------------------

class _SurvivalOrder:
    """Time-ascending view of a survival dataset with risk-set/tie indexing
    precomputed once per fit."""

    def __init__(self, X: np.ndarray, durations: np.ndarray, events: np.ndarray,
                 ties: str = "efron"):
        durations = np.asarray(durations, dtype=float)
        events = np.asarray(events, dtype=bool)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] != durations.shape[0] != events.shape[0]:
            raise CoxError("design, durations and events must align")
        if events.sum() == 0:
            raise CoxError("no events")
        if ties not in ("efron", "breslow"):
            raise CoxError(f"unknown tie handling {ties!r}")

        order = np.argsort(durations, kind="stable")
        self.order = order
        self.X = np.ascontiguousarray(X[order])
        self.t = durations[order]
        self.e = events[order]
        self.n, self.p = self.X.shape

        event_times = self.t[self.e]
        self.unique_times, self.d = np.unique(event_times, return_counts=True)
        self.k = self.unique_times.size
        # first sorted index belonging to each risk set
        self.risk_start = np.searchsorted(self.t, self.unique_times, side="left")
        # group starts within the event-only arrays
        self.group_start = np.concatenate(([0], np.cumsum(self.d)[:-1]))
        self.n_events = int(self.d.sum())
        within = np.arange(self.n_events) - np.repeat(self.group_start, self.d)
        if ties == "efron":
            self.frac = within / np.repeat(self.d, self.d)
        else:
            self.frac = np.zeros(self.n_events)
        self.X_events = self.X[self.e]
        self.x_event_sum = self.X_events.sum(axis=0)
        self.t_max = float(self.t[-1])

    # -- pieces shared by value/gradient/hessian ---------------------------

    def _phi(self, eta):
        shift = eta.max()
        return np.exp(eta - shift), shift

    def _denominators(self, phi):
        risk_phi = np.cumsum(phi[::-1])[::-1][self.risk_start]
        tie_phi = np.add.reduceat(phi[self.e], self.group_start)
        denom = np.repeat(risk_phi, self.d) - self.frac * np.repeat(tie_phi, self.d)
        return denom

    def value(self, beta: np.ndarray) -> float:
        eta = self.X @ beta
        phi, shift = self._phi(eta)
        denom = self._denominators(phi)
        if np.any(denom <= 0) or not np.all(np.isfinite(denom)):
            return -math.inf
        # centering shifts both terms identically; the value is exact
        return float((eta[self.e] - shift).sum() - np.log(denom).sum())

    def value_grad_hess(self, beta: np.ndarray, need_hess: bool = True):
        eta = self.X @ beta
        return self._vgh_from_eta(eta, need_hess=need_hess, project=True)

    def _vgh_from_eta(self, eta, need_hess: bool, project: bool):
        phi, shift = self._phi(eta)
        sphi = np.cumsum(phi[::-1])[::-1]
        risk_phi = sphi[self.risk_start]
        phi_events = phi[self.e]
        tie_phi = np.add.reduceat(phi_events, self.group_start)

        rep_d = self.d
        denom = np.repeat(risk_phi, rep_d) - self.frac * np.repeat(tie_phi, rep_d)
        if np.any(denom <= 0) or not np.all(np.isfinite(denom)):
            raise FloatingPointError("non-finite partial likelihood")
        value = float((eta[self.e] - shift).sum() - np.log(denom).sum())

        inv = 1.0 / denom
        s_risk = np.add.reduceat(inv, self.group_start)              # sum_l 1/denom
        s_tie = np.add.reduceat(self.frac * inv, self.group_start)   # sum_l frac/denom

        # per-subject weight: sum of 1/denom over event times whose risk set
        # contains the subject
        bump = np.zeros(self.n)
        np.add.at(bump, self.risk_start, s_risk)
        cum_s = np.cumsum(bump)

        if not project:
            tie_term = np.zeros(self.n)
            tie_term[self.e] = phi_events * np.repeat(s_tie, rep_d)
            grad_eta = self.e.astype(float) - phi * cum_s + tie_term
            return value, grad_eta

        phi_x = phi[:, None] * self.X
        sphi_x = np.cumsum(phi_x[::-1], axis=0)[::-1]
        risk_x = sphi_x[self.risk_start]                              # K x p
        tie_x = np.add.reduceat(phi_x[self.e], self.group_start, axis=0)

        gradient = self.x_event_sum - (s_risk @ risk_x - s_tie @ tie_x)

        if not need_hess:
            return value, gradient, None

        inv2 = inv * inv
        p_w = np.add.reduceat(inv2, self.group_start)
        q_w = np.add.reduceat(self.frac * inv2, self.group_start)
        w_w = np.add.reduceat(self.frac * self.frac * inv2, self.group_start)

        term_a = (self.X * (phi * cum_s)[:, None]).T @ self.X
        tie_weight = phi_events * np.repeat(s_tie, rep_d)
        term_a_tie = (self.X_events * tie_weight[:, None]).T @ self.X_events
        rp = risk_x * p_w[:, None]
        rq = risk_x * q_w[:, None]
        tw = tie_x * w_w[:, None]
        term_b = rp.T @ risk_x - rq.T @ tie_x - tie_x.T @ rq + tw.T @ tie_x

        hessian = -term_a + term_a_tie + term_b
        hessian = (hessian + hessian.T) / 2.0
        return value, gradient, hessian

    def breslow_cumhaz(self, beta: np.ndarray) -> StepFunction:
        """Breslow estimator of the baseline cumulative hazard at ``beta``."""
        eta = self.X @ beta
        phi, shift = self._phi(eta)
        risk_phi = np.cumsum(phi[::-1])[::-1][self.risk_start]
        jumps = self.d / (risk_phi * math.exp(shift))
        return StepFunction(self.unique_times, np.cumsum(jumps), 0.0, self.t_max)


def partial_loglik(beta, design, outcome, ties: str = "efron"):
    """Efron-corrected log partial likelihood with exact analytic gradient
    and Hessian.  Returns ``(value, gradient, hessian)``."""
    X = design.values if isinstance(design, DesignMatrix) else np.asarray(design, float)
    state = _SurvivalOrder(X, outcome.duration, outcome.event, ties=ties)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (state.p,):
        raise CoxError(f"beta has shape {beta.shape}, expected ({state.p},)")
    return state.value_grad_hess(beta)


def partial_loglik_eta(eta, durations, events, ties: str = "efron"):
    """Log partial likelihood and its gradient with respect to the
    per-subject linear predictor (log-risk) values."""
    eta = np.asarray(eta, dtype=float)
    state = _SurvivalOrder(np.zeros((eta.size, 0)), durations, events, ties=ties)
    value, grad_sorted = state._vgh_from_eta(eta[state.order], need_hess=False,
                                             project=False)
    grad = np.empty_like(grad_sorted)
    grad[state.order] = grad_sorted
    return value, grad


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

@dataclass
class Convergence:
    iterations: int
    gradient_norm: float
    loglik_path: list[float]
    ridge_used: float = 0.0
    covariance_ridge: float = 0.0


@dataclass
class CoxFit:
    beta: np.ndarray
    covariance: np.ndarray
    column_names: list[str]
    baseline_cumhaz: StepFunction
    convergence: Convergence
    ties: str = "efron"

    def linear_predictor(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.beta

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def to_dict(self) -> dict:
        return {
            "model_kind": "cox",
            "ties": self.ties,
            "column_names": list(self.column_names),
            "beta": self.beta.tolist(),
            "covariance": self.covariance.tolist(),
            "baseline_cumhaz": self.baseline_cumhaz.to_pairs(),
            "baseline_t_max": self.baseline_cumhaz.t_max,
            "convergence": {
                "iterations": self.convergence.iterations,
                "gradient_norm": self.convergence.gradient_norm,
                "ridge_used": self.convergence.ridge_used,
                "covariance_ridge": self.convergence.covariance_ridge,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoxFit":
        conv = d.get("convergence", {})
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            covariance=np.asarray(d["covariance"], dtype=float),
            column_names=list(d["column_names"]),
            baseline_cumhaz=StepFunction.from_pairs(
                d["baseline_cumhaz"], 0.0, d.get("baseline_t_max")),
            convergence=Convergence(conv.get("iterations", 0),
                                    conv.get("gradient_norm", float("nan")),
                                    [],
                                    conv.get("ridge_used", 0.0),
                                    conv.get("covariance_ridge", 0.0)),
            ties=d.get("ties", "efron"),
        )


def _solve_newton_step(neg_hessian, gradient, base_ridge):
    ladder = [base_ridge] if base_ridge > 0 else [0.0]
    ladder += [r for r in _RIDGE_LADDER if r > base_ridge]
    p = neg_hessian.shape[0]
    for ridge in ladder:
        try:
            chol = _linalg.cho_factor(neg_hessian + ridge * np.eye(p), lower=True)
            step = _linalg.cho_solve(chol, gradient)
        except (np.linalg.LinAlgError, _linalg.LinAlgError, ValueError):
            continue
        if np.all(np.isfinite(step)):
            return step, ridge
    raise CoxSingularityError(
        "separation/singularity: Hessian not invertible after ridge escalation")


def fit_cox(design, outcome, max_iter: int = 100, tol: float = 1e-7,
            ridge: float = 0.0, ties: str = "efron") -> CoxFit:
    """Newton ascent with step-halving on the Efron partial likelihood.

    Convergence is declared when the gradient max-norm drops below ``tol``.
    A singular Hessian triggers ridge escalation (1e-8 up to 1e-4) for the
    step solve; if the observed information stays non-invertible because a
    column is constant, a separation/singularity error is raised.
    """
    if isinstance(design, DesignMatrix):
        X, names = design.values, list(design.column_names)
    else:
        X = np.asarray(design, dtype=float)
        names = [f"x{j}" for j in range(X.shape[1])]
    state = _SurvivalOrder(X, outcome.duration, outcome.event, ties=ties)

    beta = np.zeros(state.p)
    value, gradient, hessian = state.value_grad_hess(beta)
    path = [value]
    ridge_used = 0.0
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if np.max(np.abs(gradient)) < tol:
            break
        step, step_ridge = _solve_newton_step(-hessian, gradient, ridge)
        ridge_used = max(ridge_used, step_ridge)
        scale = 1.0
        # monotone ascent up to double-precision noise on the value; near the
        # optimum the true improvement drops below arithmetic noise while the
        # gradient is still shrinking quadratically
        slack = 1e-10 * max(1.0, abs(value))
        for _ in range(50):
            candidate = beta + scale * step
            cand_value = state.value(candidate)
            if math.isfinite(cand_value) and cand_value >= value - slack:
                break
            scale /= 2.0
        else:
            raise CoxConvergenceError(
                f"step-halving failed at iteration {iterations}", beta=beta)
        beta = candidate
        value, gradient, hessian = state.value_grad_hess(beta)
        path.append(value)
    else:
        if np.max(np.abs(gradient)) >= tol:
            raise CoxConvergenceError(
                f"no convergence after {max_iter} iterations "
                f"(gradient max-norm {np.max(np.abs(gradient)):.3g})", beta=beta)

    covariance, cov_ridge = _covariance(-hessian, X, names, ridge)
    baseline = state.breslow_cumhaz(beta)
    conv = Convergence(iterations, float(np.max(np.abs(gradient))), path,
                       ridge_used, cov_ridge)
    return CoxFit(beta=beta, covariance=covariance, column_names=names,
                  baseline_cumhaz=baseline, convergence=conv, ties=ties)


def _covariance(neg_hessian, X, names, base_ridge):
    """Inverse observed information, with ridge escalation on singularity.

    A constant design column makes the information matrix irreparably
    singular (the likelihood is flat in that direction), so that case is an
    error rather than a silently regularized estimate.
    """
    p = neg_hessian.shape[0]
    eigvals = np.linalg.eigvalsh(neg_hessian)
    singular = eigvals[0] <= max(eigvals[-1], 1.0) * 1e-10
    if singular:
        spans = np.ptp(X, axis=0)
        constant = [names[j] for j in range(p) if spans[j] == 0]
        if constant:
            raise CoxSingularityError(
                f"separation/singularity: constant column(s) {constant}")
        for r in _RIDGE_LADDER if base_ridge == 0 else [base_ridge, *_RIDGE_LADDER]:
            try:
                cov = np.linalg.inv(neg_hessian + r * np.eye(p))
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(cov)):
                return (cov + cov.T) / 2.0, r
        raise CoxSingularityError(
            "separation/singularity: information matrix not invertible")
    cov = np.linalg.inv(neg_hessian + (base_ridge * np.eye(p) if base_ridge else 0.0))
    return (cov + cov.T) / 2.0, base_ridge


# ---------------------------------------------------------------------------
# Baseline hazard and risk prediction
# ---------------------------------------------------------------------------

def baseline_cumhaz(fit: CoxFit, design, outcome: OutcomeColumn) -> StepFunction:
    """Breslow baseline cumulative hazard for a fitted model:
    H0(t) = sum over event times <= t of d_i / sum_{j in risk set} exp(x_j beta)."""
    X = design.values if isinstance(design, DesignMatrix) else np.asarray(design, float)
    state = _SurvivalOrder(X, outcome.duration, outcome.event, ties=fit.ties)
    return state.breslow_cumhaz(fit.beta)


def predict_risk(fit: CoxFit, x, horizon: float = 10.0) -> float:
    """Absolute event probability by ``horizon``:
    1 - exp(-H0(horizon) * exp(x beta)).  Beyond the last observed time the
    last H0 value is carried forward (see ``fit.baseline_cumhaz.extrapolates``)."""
    x = np.asarray(x, dtype=float)
    eta = float(x @ fit.beta)
    h0 = float(fit.baseline_cumhaz(horizon))
    return 1.0 - math.exp(-h0 * math.exp(eta))


def predict_risk_batch(fit: CoxFit, X, horizon: float = 10.0) -> np.ndarray:
    eta = np.asarray(X, dtype=float) @ fit.beta
    h0 = float(fit.baseline_cumhaz(horizon))
    return 1.0 - np.exp(-h0 * np.exp(eta))


# ---------------------------------------------------------------------------
# Inference summary
# ---------------------------------------------------------------------------

@dataclass
class SummaryRow:
    covariate: str
    log_hr: float
    hr: float
    ci_low: float
    ci_high: float
    p_value: float
    neg_log2_p: float


@dataclass
class CoxSummary:
    rows: list[SummaryRow]

    def sorted_by_effect(self) -> "CoxSummary":
        return CoxSummary(sorted(self.rows, key=lambda r: -r.log_hr))

    def to_records(self) -> list[dict]:
        return [
            {
                "covariate": r.covariate,
                "log_hr": r.log_hr,
                "ci_low": r.ci_low,
                "ci_high": r.ci_high,
                "neg_log2_p": r.neg_log2_p,
                "hr": r.hr,
                "p_value": r.p_value,
            }
            for r in self.rows
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["covariate", "log_hr", "ci_low", "ci_high", "neg_log2_p"])
            for r in self.rows:
                writer.writerow([r.covariate, r.log_hr, r.ci_low, r.ci_high, r.neg_log2_p])


def summarize(fit: CoxFit) -> CoxSummary:
    """Wald inference per coefficient: z = beta/se, two-sided normal p-value,
    95% CI at +-1.959964 se, and -log2(p) with p floored at the smallest
    normal double.  Rows are ordered by log(HR) descending."""
    se = fit.standard_errors()
    rows = []
    tiny = np.finfo(float).tiny
    for name, b, s in zip(fit.column_names, fit.beta, se):
        z = b / s if s > 0 else math.inf * np.sign(b) if b else 0.0
        p = float(2.0 * _stats.norm.sf(abs(z))) if math.isfinite(z) else 0.0
        p_floored = max(p, tiny)
        rows.append(SummaryRow(
            covariate=name,
            log_hr=float(b),
            hr=float(np.exp(b)),
            ci_low=float(b - CI_MULTIPLIER * s),
            ci_high=float(b + CI_MULTIPLIER * s),
            p_value=p,
            neg_log2_p=float(-np.log2(p_floored)),
        ))
    return CoxSummary(rows).sorted_by_effect()
