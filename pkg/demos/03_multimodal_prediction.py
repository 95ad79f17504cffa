"""Train a maneuver-conditioned model and inspect a multi-modal forecast.

Trains the conditioned variant on a small synthetic benchmark, then
prints the six-mode predictive distribution for one held-out vehicle:
per-maneuver probability and the Gaussian mean track of each mode.
"""

import numpy as np

from trajpred import evaluation as ev
from trajpred import model as M
from trajpred.model import ModelConfig, Variant

train, test = ev.make_benchmark(n_vehicles=120, seed=5, duration_s=40.0)
print(f"{len(train)} train / {len(test)} test samples")

cfg = ModelConfig(variant=Variant.M_LSTM)
m, losses = M.train(train, cfg, epochs=25, batch=128, seed=0)
print(f"trajectory nll: {losses[0]:.3f} -> {losses[-1]:.3f}\n")

# pick a held-out lane-change sample whose maneuver the classifier
# identifies, so the mode weights tell a clear story
pred_labels = ev.classify_batch(test, m)
sample = next(s for s, lab in zip(test, pred_labels)
              if s.label.lateral.name != "KEEP" and lab == s.label)
dist = M.predict_multimodal(sample.history, m)

print(f"true maneuver: {sample.label.lateral.name}/"
      f"{sample.label.longitudinal.name}")
print(f"mode probabilities sum to {dist.probabilities().sum():.12f}\n")
for mode in dist.modes:
    g1, g5 = mode.trajectory[4], mode.trajectory[-1]
    print(f"  {mode.label.lateral.name:<5s}/{mode.label.longitudinal.name:<6s} "
          f"p={mode.probability:.3f}  "
          f"mean@1s=({g1.mu_x:+6.2f},{g1.mu_y:6.1f})  "
          f"mean@5s=({g5.mu_x:+6.2f},{g5.mu_y:6.1f})  "
          f"sigma@5s=({g5.sigma_x:.2f},{g5.sigma_y:.2f})")

truth = sample.future
best = ev.point_prediction(dist)
err = np.linalg.norm(best - truth, axis=1)
print(f"\ntop-mode displacement error: 1s={err[4]:.2f} m, 5s={err[24]:.2f} m")
