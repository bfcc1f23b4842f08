"""
Training the agent and scoring a held-out fold
==============================================

The agent walks the time-sorted training records, guesses each next step
epsilon-greedily, earns 1 when right, and learns from time-sorted replay
batches. Prediction on the held-out fold is purely greedy.
"""

import numpy as np
from proapt.config import RunConfig
from proapt.dataset import generate_synthetic_apt, preprocess_records, synthetic_schema
from proapt.evaluation import evaluate_network
from proapt.pipeline import fit_fold, prepare_fold

ds = preprocess_records(generate_synthetic_apt(None, 4000, seed=0), synthetic_schema(), k=4, seed=0)

# smaller than the defaults so the demo runs in seconds
config = RunConfig(hidden_size=16, batch_size=32, epochs=6)
fold = prepare_fold(ds, 0, config)
print(f"train {len(fold.train)} records (after oversampling), test {len(fold.test)}")

result = fit_fold(fold, config, n_actions=len(ds.vocab),
                  on_epoch=lambda s: print(f"epoch {s.epoch}: loss {s.mean_loss:.4f} "
                                           f"reward {s.mean_reward:.3f} eps {s.epsilon:.3f}"))

net = result.pair.main
report, cm, preds = evaluate_network(net, fold.test.X.astype(net.dtype), fold.test.y,
                                     len(ds.vocab), config.discount, ds.vocab.names,
                                     latency_samples=100)
print("accuracy", round(report.accuracy, 4), "macro-F1", round(report.f1_macro, 4))
print("seconds per prediction", f"{report.mean_prediction_seconds:.2e}")
print(cm.counts)
