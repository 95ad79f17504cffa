"""Compare all model variants against the constant-velocity baseline.

Runs the full ablation ladder (CV filter, single-channel LSTM, full
scene LSTM, maneuver-conditioned LSTM with predicted and with
ground-truth maneuvers) on the shipped fixed-seed synthetic benchmark
and prints the RMSE-by-horizon table. Takes a few minutes: it trains
three trajectory models plus the maneuver classifier.
"""

import logging

from trajpred import evaluation as ev

logging.basicConfig(level=logging.WARNING)

# same parameters as configs/benchmark.cfg
train, test = ev.make_benchmark(n_vehicles=600, seed=42, duration_s=40.0)
print(f"{len(train)} train / {len(test)} test samples")

result, _ = ev.run_ablation(train, test, seed=0, epochs=20, batch=128)
print()
print(result)
print("\ncolumns are meters RMSE at 1..5 s prediction horizons")
