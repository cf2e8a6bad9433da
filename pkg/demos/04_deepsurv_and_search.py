"""Train the neural Cox model and run a small random hyperparameter search.

The first part trains the reported best configuration for the reduced
feature set (relu, batch norm, dropout 0.3338, weight decay 0.0596, Adam at
3.09e-4, 32x32) and compares its test concordance to a plain Cox fit on the
same linear-hazard data.  The second part samples the full search space for
a handful of trials.
"""

import numpy as np

from survwright.cox import fit_cox
from survwright.metrics import concordance_index
from survwright.neural import HyperConfig, build_network, predict_log_risk, train
from survwright.search import search
from survwright.synth import GeneratorSpec, generate

beta = [0.8, -0.8, 0.3]
tr_d, tr_o, _ = generate(GeneratorSpec(n=3000, beta_true=beta, rate=0.05, seed=1))
va_d, va_o, _ = generate(GeneratorSpec(n=1000, beta_true=beta, rate=0.05, seed=2))
te_d, te_o, _ = generate(GeneratorSpec(n=3000, beta_true=beta, rate=0.05, seed=3))

config = HyperConfig(activation="relu", batch_norm=True, dropout=0.3338,
                     weight_decay=0.0596, learning_rate=0.000309,
                     optimizer="adam", topology="32x32")
model = build_network(config, tr_d.n_cols, seed=5)
model = train(model, tr_d, tr_o, va_d, va_o, max_epochs=512, patience=10, seed=5)
best = model.training_history[-1]
print(f"trained {len(model.training_history) - 1} epochs, "
      f"best validation loss {best['best_val_loss']:.4f} "
      f"at epoch {best['best_epoch']}")

c_net = concordance_index(predict_log_risk(model, te_d.values),
                          te_o.duration, te_o.event)
c_cox = concordance_index(te_d.values @ fit_cox(tr_d, tr_o).beta,
                          te_o.duration, te_o.event)
print(f"test c-index: network {c_net:.4f} vs cox {c_cox:.4f} "
      f"(linear data: parity expected)\n")

# random search over the full space: activations x topologies x dropout x
# weight decay x batch norm x optimizer x momentum x log-uniform lr
print("random search, 6 trials:")
best_config, best_model, records = search(tr_d, tr_o, va_d, va_o,
                                          budget=6, seed=9, max_epochs=150)
for r in records:
    status = f"val loss {r.val_loss:8.4f}" if r.failure is None else "diverged"
    print(f"  trial {r.trial}: {r.config.topology!s:<14} "
          f"{r.config.activation:<10} lr {r.config.learning_rate:.1e}  {status}")
print("winner:", best_config.to_dict())
