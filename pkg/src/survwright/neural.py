"""Feed-forward time-to-event network trained on the Cox partial likelihood.

The network replaces the Cox linear predictor with f(x): hidden layers of
affine -> optional batch norm -> activation -> dropout, then a single linear
output unit (the log-risk; no final nonlinearity).  Training minimizes the
negative Efron partial likelihood normalized by the event count, full-batch
by default (the loss couples subjects through risk sets, so minibatching
with batch-local risk sets is only an approximation and is opt-in).

Everything runs in double precision with hand-written backpropagation so
gradients are exact and checkable against finite differences.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import OutcomeColumn
from .cox import CoxError, StepFunction, _SurvivalOrder, partial_loglik_eta

logger = logging.getLogger(__name__)

ACTIVATIONS = ("leaky_relu", "relu", "selu")
OPTIMIZERS = ("sgd", "adam")
TOPOLOGIES = (
    (8,), (32,), (256,), (32, 32), (64, 64), (128, 128), (64, 16), (256, 32),
    (32, 32, 32), (64, 64, 64),
)

LEAKY_SLOPE = 0.01
SELU_ALPHA = 1.6732632423543772
SELU_LAMBDA = 1.0507009873554805
BN_EPS = 1e-5
BN_DECAY = 0.9
ADAM_BETA1, ADAM_BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


class NeuralCoxError(RuntimeError):
    pass


def parse_topology(text) -> tuple[int, ...]:
    """Accept '32x32' style strings or iterables of widths."""
    if isinstance(text, str):
        parts = text.lower().replace(" ", "").split("x")
        return tuple(int(p) for p in parts)
    return tuple(int(w) for w in text)


@dataclass(frozen=True)
class HyperConfig:
    activation: str = "relu"
    topology: tuple[int, ...] = (32, 32)
    dropout: float = 0.0
    weight_decay: float = 0.0
    batch_norm: bool = False
    optimizer: str = "adam"
    momentum: float = 0.0          # used by sgd only
    learning_rate: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "topology", parse_topology(self.topology))
        if self.activation not in ACTIVATIONS:
            raise NeuralCoxError(f"invalid activation {self.activation!r}")
        if self.optimizer not in OPTIMIZERS:
            raise NeuralCoxError(f"invalid optimizer {self.optimizer!r}")
        if not self.topology or any(w < 1 for w in self.topology):
            raise NeuralCoxError(f"invalid topology {self.topology!r}")
        if not 0.0 <= self.dropout <= 0.9:
            raise NeuralCoxError(f"dropout {self.dropout} outside [0, 0.9]")
        if not 0.0 <= self.weight_decay <= 20.0:
            raise NeuralCoxError(f"weight_decay {self.weight_decay} outside [0, 20]")
        if not 0.0 <= self.momentum <= 1.0:
            raise NeuralCoxError(f"momentum {self.momentum} outside [0, 1]")
        if not 1e-5 <= self.learning_rate <= 1.0:
            raise NeuralCoxError(f"learning_rate {self.learning_rate} outside [1e-5, 1]")

    def to_dict(self) -> dict:
        return {
            "activation": self.activation,
            "topology": "x".join(str(w) for w in self.topology),
            "dropout": self.dropout,
            "weight_decay": self.weight_decay,
            "batch_norm": self.batch_norm,
            "optimizer": self.optimizer,
            "momentum": self.momentum,
            "learning_rate": self.learning_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperConfig":
        return cls(
            activation=d["activation"],
            topology=parse_topology(d["topology"]),
            dropout=float(d.get("dropout", 0.0)),
            weight_decay=float(d.get("weight_decay", 0.0)),
            batch_norm=bool(d.get("batch_norm", False)),
            optimizer=d.get("optimizer", "adam"),
            momentum=float(d.get("momentum", 0.0)),
            learning_rate=float(d["learning_rate"]),
        )


@dataclass
class NeuralCoxModel:
    config: HyperConfig
    input_columns: list[str]
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)  # BN running stats
    baseline_cumhaz: StepFunction | None = None
    training_history: list[dict] = field(default_factory=list)

    @property
    def n_hidden(self) -> int:
        return len(self.config.topology)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def to_dict(self) -> dict:
        d = {
            "model_kind": "neural_cox",
            "config": self.config.to_dict(),
            "input_columns": list(self.input_columns),
            "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                       for k, v in self.params.items()},
            "buffers": {k: v.tolist() for k, v in self.buffers.items()},
        }
        if self.baseline_cumhaz is not None:
            d["baseline_cumhaz"] = self.baseline_cumhaz.to_pairs()
            d["baseline_t_max"] = self.baseline_cumhaz.t_max
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralCoxModel":
        params = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"])
                  for k, v in d["params"].items()}
        buffers = {k: np.asarray(v, dtype=float) for k, v in d.get("buffers", {}).items()}
        baseline = None
        if "baseline_cumhaz" in d:
            baseline = StepFunction.from_pairs(d["baseline_cumhaz"], 0.0,
                                               d.get("baseline_t_max"))
        return cls(config=HyperConfig.from_dict(d["config"]),
                   input_columns=list(d["input_columns"]),
                   params=params, buffers=buffers, baseline_cumhaz=baseline)


def build_network(config: HyperConfig, input_width: int, seed: int = 0,
                  input_columns: list[str] | None = None) -> NeuralCoxModel:
    """Deterministic initialization: weights uniform with fan-in scaling
    (bound sqrt(3/fan_in), i.e. variance 1/fan_in, which keeps SELU
    self-normalizing), biases zero, batch-norm scale one / shift zero."""
    if input_width < 1:
        raise NeuralCoxError("input_width must be >= 1")
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    fan_in = input_width
    for i, width in enumerate(config.topology):
        bound = math.sqrt(3.0 / fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, width))
        params[f"b{i}"] = np.zeros(width)
        if config.batch_norm:
            params[f"gamma{i}"] = np.ones(width)
            params[f"beta{i}"] = np.zeros(width)
            buffers[f"mean{i}"] = np.zeros(width)
            buffers[f"var{i}"] = np.ones(width)
        fan_in = width
    bound = math.sqrt(3.0 / fan_in)
    params["W_out"] = rng.uniform(-bound, bound, size=(fan_in, 1))
    params["b_out"] = np.zeros(1)
    columns = input_columns or [f"x{j}" for j in range(input_width)]
    return NeuralCoxModel(config=config, input_columns=columns,
                          params=params, buffers=buffers)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    # selu; exp only on the negative side (where() evaluates both branches)
    neg = np.exp(np.minimum(z, 0.0)) - 1.0
    return SELU_LAMBDA * np.where(z > 0, z, SELU_ALPHA * neg)


def _activate_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(float)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    return SELU_LAMBDA * np.where(z > 0, 1.0,
                                  SELU_ALPHA * np.exp(np.minimum(z, 0.0)))


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def forward(model: NeuralCoxModel, X, train_mode: bool = False,
            rng: np.random.Generator | None = None,
            update_running: bool = False):
    """Log-risk values for a batch; returns ``(eta, cache)``.

    Train mode uses batch statistics for batch norm and applies inverted
    dropout (mask drawn from ``rng``); eval mode is deterministic.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if not np.all(np.isfinite(X)):
        raise NeuralCoxError("non-finite network input")
    cfg = model.config
    if X.shape[1] != model.params["W0"].shape[0]:
        raise NeuralCoxError(
            f"input width {X.shape[1]} != model width {model.params['W0'].shape[0]}")
    if train_mode and cfg.dropout > 0 and rng is None:
        raise NeuralCoxError("train-mode forward with dropout needs an rng")

    cache = []
    a = X
    for i in range(model.n_hidden):
        w, b = model.params[f"W{i}"], model.params[f"b{i}"]
        z = a @ w + b
        layer = {"a_in": a, "z": z}
        h = z
        if cfg.batch_norm:
            if train_mode:
                mu = h.mean(axis=0)
                var = h.var(axis=0)
                if update_running:
                    model.buffers[f"mean{i}"] = (BN_DECAY * model.buffers[f"mean{i}"]
                                                 + (1 - BN_DECAY) * mu)
                    model.buffers[f"var{i}"] = (BN_DECAY * model.buffers[f"var{i}"]
                                                + (1 - BN_DECAY) * var)
            else:
                mu = model.buffers[f"mean{i}"]
                var = model.buffers[f"var{i}"]
            inv_sd = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (h - mu) * inv_sd
            h = model.params[f"gamma{i}"] * xhat + model.params[f"beta{i}"]
            layer.update(xhat=xhat, inv_sd=inv_sd, bn_train=train_mode)
        layer["pre_act"] = h
        h = _activate(cfg.activation, h)
        if train_mode and cfg.dropout > 0:
            mask = (rng.uniform(size=h.shape) >= cfg.dropout) / (1.0 - cfg.dropout)
            h = h * mask
            layer["mask"] = mask
        cache.append(layer)
        a = h
    eta = (a @ model.params["W_out"] + model.params["b_out"]).ravel()
    cache.append({"a_in": a})
    return eta, cache


def predict_log_risk(model: NeuralCoxModel, X) -> np.ndarray:
    eta, _ = forward(model, X, train_mode=False)
    return eta


def neg_partial_loglik_loss(log_risks, outcome: OutcomeColumn,
                            ties: str = "efron") -> float:
    """Negative Efron partial likelihood of the given log-risks, divided by
    the event count so learning rates transfer across cohort sizes."""
    n_events = int(np.asarray(outcome.event, dtype=bool).sum())
    if n_events == 0:
        raise CoxError("no events")
    value, _ = partial_loglik_eta(log_risks, outcome.duration, outcome.event, ties=ties)
    return -value / n_events


def gradients(model: NeuralCoxModel, X, outcome: OutcomeColumn,
              rng: np.random.Generator | None = None,
              update_running: bool = False):
    """Exact gradients of the per-event negative partial likelihood with
    respect to every parameter (weight decay not included).  Returns
    ``(loss, grads)``."""
    eta, cache = forward(model, X, train_mode=True, rng=rng,
                         update_running=update_running)
    n_events = int(outcome.event.sum())
    if n_events == 0:
        raise CoxError("no events")
    value, grad_eta = partial_loglik_eta(eta, outcome.duration, outcome.event)
    loss = -value / n_events
    d_eta = -grad_eta / n_events

    cfg = model.config
    grads: dict[str, np.ndarray] = {}
    a_last = cache[-1]["a_in"]
    d = d_eta[:, None]
    grads["W_out"] = a_last.T @ d
    grads["b_out"] = d.sum(axis=0)
    d_a = d @ model.params["W_out"].T

    for i in reversed(range(model.n_hidden)):
        layer = cache[i]
        if "mask" in layer:
            d_a = d_a * layer["mask"]
        d_pre = d_a * _activate_grad(cfg.activation, layer["pre_act"])
        if cfg.batch_norm:
            xhat, inv_sd = layer["xhat"], layer["inv_sd"]
            grads[f"gamma{i}"] = (d_pre * xhat).sum(axis=0)
            grads[f"beta{i}"] = d_pre.sum(axis=0)
            d_xhat = d_pre * model.params[f"gamma{i}"]
            if layer["bn_train"]:
                m = d_xhat.shape[0]
                d_z = (inv_sd / m) * (m * d_xhat - d_xhat.sum(axis=0)
                                      - xhat * (d_xhat * xhat).sum(axis=0))
            else:
                d_z = d_xhat * inv_sd
        else:
            d_z = d_pre
        a_in = layer["a_in"]
        grads[f"W{i}"] = a_in.T @ d_z
        grads[f"b{i}"] = d_z.sum(axis=0)
        d_a = d_z @ model.params[f"W{i}"].T
    return loss, grads


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

class _Optimizer:
    def __init__(self, config: HyperConfig, params: dict[str, np.ndarray]):
        self.cfg = config
        self.state = {k: {"m": np.zeros_like(v), "v": np.zeros_like(v)}
                      for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        lr = self.cfg.learning_rate
        self.t += 1
        for key, g in grads.items():
            if self.cfg.weight_decay and key.startswith("W"):
                g = g + self.cfg.weight_decay * params[key]
            if self.cfg.optimizer == "sgd":
                buf = self.state[key]["m"]
                buf *= self.cfg.momentum
                buf -= lr * g
                params[key] += buf
            else:  # adam
                st = self.state[key]
                st["m"] = ADAM_BETA1 * st["m"] + (1 - ADAM_BETA1) * g
                st["v"] = ADAM_BETA2 * st["v"] + (1 - ADAM_BETA2) * g * g
                m_hat = st["m"] / (1 - ADAM_BETA1 ** self.t)
                v_hat = st["v"] / (1 - ADAM_BETA2 ** self.t)
                params[key] -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

class DivergenceError(NeuralCoxError):
    def __init__(self, epoch: int, config: HyperConfig):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch} "
                         f"with config {config.to_dict()}")
        self.epoch = epoch
        self.config = config


def train(model: NeuralCoxModel, design, outcome: OutcomeColumn,
          val_design, val_outcome: OutcomeColumn,
          max_epochs: int = 512, patience: int = 10, seed: int = 0,
          batch_size: int | None = None) -> NeuralCoxModel:
    """Gradient training with early stopping on the validation loss.

    Full-batch by default; pass ``batch_size`` for the approximate
    minibatch mode with batch-local risk sets (batches without events are
    skipped with a warning).  Returns the model at its best validation
    epoch, with the Breslow baseline computed from the training-set
    log-risks.
    """
    X = design.values if hasattr(design, "values") else np.asarray(design, float)
    Xv = val_design.values if hasattr(val_design, "values") else np.asarray(val_design, float)
    rng = np.random.default_rng(seed)
    opt = _Optimizer(model.config, model.params)

    best_val = math.inf
    best_params = model.copy_params()
    best_buffers = {k: v.copy() for k, v in model.buffers.items()}
    best_epoch = 0
    wait = 0
    history: list[dict] = []

    for epoch in range(1, max_epochs + 1):
        if batch_size is None:
            try:
                loss, grads = gradients(model, X, outcome, rng=rng,
                                        update_running=True)
            except FloatingPointError as exc:
                raise DivergenceError(epoch, model.config) from exc
            if not math.isfinite(loss):
                raise DivergenceError(epoch, model.config)
            opt.step(model.params, grads)
            train_loss = loss
        else:
            perm = rng.permutation(X.shape[0])
            losses = []
            for start in range(0, X.shape[0], batch_size):
                idx = perm[start:start + batch_size]
                sub = OutcomeColumn(outcome.duration[idx], outcome.event[idx])
                if not sub.event.any():
                    logger.warning("skipping batch with no events (epoch %d)", epoch)
                    continue
                try:
                    loss, grads = gradients(model, X[idx], sub, rng=rng,
                                            update_running=True)
                except FloatingPointError as exc:
                    raise DivergenceError(epoch, model.config) from exc
                if not math.isfinite(loss):
                    raise DivergenceError(epoch, model.config)
                opt.step(model.params, grads)
                losses.append(loss)
            train_loss = float(np.mean(losses)) if losses else math.nan

        try:
            val_eta, _ = forward(model, Xv, train_mode=False)
            val_loss = neg_partial_loglik_loss(val_eta, val_outcome)
        except FloatingPointError as exc:
            raise DivergenceError(epoch, model.config) from exc
        except CoxError:
            val_loss = math.inf
        if not math.isfinite(val_loss):
            raise DivergenceError(epoch, model.config)
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss})

        if val_loss < best_val:
            best_val = val_loss
            best_params = model.copy_params()
            best_buffers = {k: v.copy() for k, v in model.buffers.items()}
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait > patience:
                break

    model.params = best_params
    model.buffers = best_buffers
    model.training_history = history + [{"best_epoch": best_epoch,
                                         "best_val_loss": best_val}]
    train_eta, _ = forward(model, X, train_mode=False)
    model.baseline_cumhaz = _breslow_from_eta(train_eta, outcome)
    return model


def _breslow_from_eta(eta: np.ndarray, outcome: OutcomeColumn) -> StepFunction:
    state = _SurvivalOrder(eta[:, None], outcome.duration, outcome.event)
    # breslow_cumhaz evaluates exp(X @ beta); beta=(1,) makes that exp(eta)
    return state.breslow_cumhaz(np.ones(1))


def predict_risk(model: NeuralCoxModel, x, horizon: float = 10.0) -> float:
    """1 - exp(-H0(horizon) * exp(f(x))) with f the eval-mode network."""
    if model.baseline_cumhaz is None:
        raise NeuralCoxError("model has no baseline hazard; train it first")
    eta = float(predict_log_risk(model, np.atleast_2d(x))[0])
    h0 = float(model.baseline_cumhaz(horizon))
    return 1.0 - math.exp(-h0 * math.exp(eta))


def predict_risk_batch(model: NeuralCoxModel, X, horizon: float = 10.0) -> np.ndarray:
    if model.baseline_cumhaz is None:
        raise NeuralCoxError("model has no baseline hazard; train it first")
    eta = predict_log_risk(model, X)
    h0 = float(model.baseline_cumhaz(horizon))
    return 1.0 - np.exp(-h0 * np.exp(eta))
