"""Random search over the neural-Cox hyperparameter space.

The space is: activation in {leaky_relu, relu, selu}; hidden topology from a
fixed list of ten layouts; dropout uniform on [0, 0.9]; weight decay uniform
on [0, 20]; batch normalization yes/no; optimizer in {sgd, adam}; momentum
uniform on [0, 1]; learning rate log-uniform on [1e-5, 1].  Each trial
samples one configuration, trains a network, and records the validation
loss; the best configuration is the one with the minimum validation loss.
Failed trials (divergence) score +inf so the search always totals.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np

from .metrics import concordance_index
from .neural import (
    ACTIVATIONS,
    OPTIMIZERS,
    TOPOLOGIES,
    DivergenceError,
    HyperConfig,
    NeuralCoxError,
    NeuralCoxModel,
    build_network,
    predict_log_risk,
    train,
)


@dataclass(frozen=True)
class SearchSpace:
    activations: tuple[str, ...] = ACTIVATIONS
    topologies: tuple[tuple[int, ...], ...] = TOPOLOGIES
    dropout_range: tuple[float, float] = (0.0, 0.9)
    weight_decay_range: tuple[float, float] = (0.0, 20.0)
    momentum_range: tuple[float, float] = (0.0, 1.0)
    learning_rate_range: tuple[float, float] = (1e-5, 1.0)
    optimizers: tuple[str, ...] = OPTIMIZERS
    batch_norm_choices: tuple[bool, ...] = (True, False)


DEFAULT_SPACE = SearchSpace()


def sample_config(space: SearchSpace, rng: np.random.Generator) -> HyperConfig:
    """One independent draw per dimension: categorical dims uniform over
    their choices, dropout/weight-decay/momentum uniform over their ranges,
    learning rate log-uniform."""
    lo, hi = space.learning_rate_range
    lr = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    return HyperConfig(
        activation=space.activations[rng.integers(len(space.activations))],
        topology=space.topologies[rng.integers(len(space.topologies))],
        dropout=rng.uniform(*space.dropout_range),
        weight_decay=rng.uniform(*space.weight_decay_range),
        batch_norm=bool(space.batch_norm_choices[rng.integers(len(space.batch_norm_choices))]),
        optimizer=space.optimizers[rng.integers(len(space.optimizers))],
        momentum=rng.uniform(*space.momentum_range),
        learning_rate=lr,
    )


@dataclass
class TrialRecord:
    trial: int
    config: HyperConfig
    val_loss: float
    val_cindex: float | None
    epochs_run: int
    wall_time: float
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "config": self.config.to_dict(),
            "val_loss": self.val_loss,
            "val_cindex": self.val_cindex,
            "epochs_run": self.epochs_run,
            "wall_time": self.wall_time,
            "failure": self.failure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(
            trial=d["trial"],
            config=HyperConfig.from_dict(d["config"]),
            val_loss=float(d["val_loss"]) if d["val_loss"] is not None else math.inf,
            val_cindex=d.get("val_cindex"),
            epochs_run=d["epochs_run"],
            wall_time=d["wall_time"],
            failure=d.get("failure"),
        )


class SearchError(RuntimeError):
    pass


def search(design, outcome, val_design, val_outcome, budget: int, seed: int = 0,
           space: SearchSpace = DEFAULT_SPACE, max_epochs: int = 512,
           patience: int = 10, trial_log=None
           ) -> tuple[HyperConfig, NeuralCoxModel, list[TrialRecord]]:
    """Train one model per sampled configuration and keep the best.

    Deterministic for a fixed seed: the config stream, per-trial training
    seeds, and therefore the winner are all reproducible.  When
    ``trial_log`` is given, each record is appended as one JSON line.
    """
    if budget < 1:
        raise SearchError("budget must be >= 1")
    rng = np.random.default_rng(seed)
    input_width = design.values.shape[1] if hasattr(design, "values") else design.shape[1]
    records: list[TrialRecord] = []
    best: tuple[float, NeuralCoxModel, HyperConfig] | None = None
    for trial in range(budget):
        config = sample_config(space, rng)
        trial_seed = int(rng.integers(2 ** 31))
        started = time.perf_counter()
        failure = None
        val_loss = math.inf
        val_cindex = None
        epochs = 0
        model = None
        try:
            model = build_network(config, input_width, seed=trial_seed)
            model = train(model, design, outcome, val_design, val_outcome,
                          max_epochs=max_epochs, patience=patience, seed=trial_seed)
            summary = model.training_history[-1]
            val_loss = float(summary["best_val_loss"])
            epochs = len(model.training_history) - 1
            eta = predict_log_risk(model, val_design.values
                                   if hasattr(val_design, "values") else val_design)
            val_cindex = float(concordance_index(eta, val_outcome.duration,
                                                 val_outcome.event))
        except (DivergenceError, NeuralCoxError, FloatingPointError, ValueError) as exc:
            failure = f"{type(exc).__name__}: {exc}"
            val_loss = math.inf
        record = TrialRecord(trial, config, val_loss, val_cindex, epochs,
                             time.perf_counter() - started, failure)
        records.append(record)
        if trial_log is not None:
            trial_log.write(json.dumps(record.to_dict()) + "\n")
            trial_log.flush()
        if failure is None and (best is None or val_loss < best[0]):
            best = (val_loss, model, config)
    if best is None:
        raise SearchError(
            "all trials failed: "
            + "; ".join(f"#{r.trial} {r.failure}" for r in records))
    return best[2], best[1], records


def load_trial_log(path) -> list[TrialRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(TrialRecord.from_dict(json.loads(line)))
    return records
