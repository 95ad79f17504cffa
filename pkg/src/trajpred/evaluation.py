"""RMSE-by-horizon evaluation, maneuver accuracy, and the ablation runner.

RMSE is the root-mean-square Euclidean displacement (meters) between the
point prediction and the ground truth at 1..5 s ahead; at the 5 Hz
working rate horizon k seconds is future step 5k (0-based index 5k-1).
For multi-modal predictions the point prediction is the mean trajectory
of the highest-probability maneuver (ties to the lowest joint index).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import model as M
from . import synth, trackstore
from .baseline import cv_filter_predict
from .maneuvers import ManeuverLabel
from .model import ManeuverDistribution, Model, ModelConfig, Variant

log = logging.getLogger(__name__)

HORIZONS_S = (1, 2, 3, 4, 5)


def rmse_table(predictions, truths) -> np.ndarray:
    """Five RMSE values (meters at 1..5 s) over aligned (t_f, 2) arrays."""
    if len(predictions) == 0:
        raise ValueError("empty sample set")
    if len(predictions) != len(truths):
        raise ValueError("predictions and truths differ in length")
    pred = np.asarray(predictions, dtype=np.float64)
    true = np.asarray(truths, dtype=np.float64)
    sq = ((pred - true) ** 2).sum(axis=2)     # (N, t_f) squared displacement
    idx = [5 * k - 1 for k in HORIZONS_S]
    return np.sqrt(sq[:, idx].mean(axis=0))


def point_prediction(dist: ManeuverDistribution) -> np.ndarray:
    """Mean trajectory of the argmax-probability mode; ties -> lowest index."""
    k = int(np.argmax(dist.probabilities()))
    traj = dist.modes[k].trajectory
    return np.array([[g.mu_x, g.mu_y] for g in traj])


def maneuver_accuracy(predicted, truth) -> dict:
    """Fraction of matching labels per axis and jointly."""
    if len(predicted) != len(truth):
        raise ValueError("label lists differ in length")
    lat = np.array([int(p.lateral) == int(t.lateral)
                    for p, t in zip(predicted, truth)])
    lon = np.array([int(p.longitudinal) == int(t.longitudinal)
                    for p, t in zip(predicted, truth)])
    return {"lateral": float(lat.mean()), "longitudinal": float(lon.mean()),
            "joint": float((lat & lon).mean())}


# ---------------------------------------------------------------------------
# Batch point predictions per variant
# ---------------------------------------------------------------------------


def predict_points_cv(samples) -> np.ndarray:
    t_f = samples[0].future.shape[0]
    return np.stack([cv_filter_predict(s.history[:, 0:2], t_f) for s in samples])


def classify_batch(samples, m: Model):
    hist = np.stack([s.history for s in samples])
    if m.norm is not None:
        hist = m.norm.apply_hist(hist)
    p_lat, p_lon = M.classify(hist, m.cls, m.cfg)
    labels = []
    for pl, pn in zip(p_lat, p_lon):
        joint = np.outer(pl, pn).reshape(-1)     # index = 2*lat + lon
        labels.append(ManeuverLabel.from_joint_index(int(np.argmax(joint))))
    return labels


def predict_points_model(samples, m: Model, labels=None) -> np.ndarray:
    """Point predictions (N, t_f, 2) for any variant.

    For conditioned variants `labels` supplies the maneuvers to decode
    with (classifier argmax for M-LSTM, ground truth for M-LSTM-GT).
    """
    hist = np.stack([s.history for s in samples])
    if m.cfg.variant is Variant.V_LSTM:
        hist = hist[:, :, 0:2]
    if m.norm is not None:
        hist = m.norm.apply_hist(hist)
    context = M.encode(hist, m.traj, m.cfg, tape=None)
    onehots = None
    if m.cfg.conditioned:
        onehots = np.stack([M.maneuver_onehot(lab) for lab in labels])
    means = M.decode_means(context, onehots, m.traj, m.cfg)
    return m.norm.unapply_means(means) if m.norm is not None else means


def dist_to_dict(dist: ManeuverDistribution) -> dict:
    """Prediction JSON schema: 6 maneuver entries with per-step Gaussians."""
    modes = []
    for mode in dist.modes:
        modes.append({
            "lateral": mode.label.lateral.name,
            "longitudinal": mode.label.longitudinal.name,
            "probability": mode.probability,
            "trajectory": [{"t": k + 1, "mux": g.mu_x, "muy": g.mu_y,
                            "sx": g.sigma_x, "sy": g.sigma_y, "rho": g.rho}
                           for k, g in enumerate(mode.trajectory)],
        })
    return {"modes": modes}


def gaussian2_pdf(x, y, g) -> np.ndarray:
    dx = (x - g.mu_x) / g.sigma_x
    dy = (y - g.mu_y) / g.sigma_y
    omr = 1.0 - g.rho ** 2
    z = dx * dx + dy * dy - 2.0 * g.rho * dx * dy
    return np.exp(-z / (2.0 * omr)) / (
        2.0 * np.pi * g.sigma_x * g.sigma_y * np.sqrt(omr))


def mixture_density_grid(dist: ManeuverDistribution, xmin, xmax, ymin, ymax,
                         res):
    """Mixture density averaged over future steps on an (x, y) mesh.

    Returns (xs, ys, density) with density shape (len(ys), len(xs)).
    """
    xs = np.arange(xmin, xmax + res / 2, res)
    ys = np.arange(ymin, ymax + res / 2, res)
    gx, gy = np.meshgrid(xs, ys)
    dens = np.zeros_like(gx)
    n_steps = len(dist.modes[0].trajectory)
    for mode in dist.modes:
        if mode.probability == 0.0:
            continue
        for g in mode.trajectory:
            dens += mode.probability * gaussian2_pdf(gx, gy, g)
    return xs, ys, dens / n_steps


def write_grid_csv(path, xs, ys, density):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "density"])
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                w.writerow([f"{x:.4f}", f"{y:.4f}", f"{density[j, i]:.8g}"])


# ---------------------------------------------------------------------------
# Benchmark + ablation
# ---------------------------------------------------------------------------

VARIANT_ORDER = ("CV", "V_LSTM", "S_LSTM", "M_LSTM", "M_LSTM_GT")


@dataclass
class AblationResult:
    rmse: dict = field(default_factory=dict)       # name -> (5,) array
    accuracy: dict = field(default_factory=dict)   # name -> accuracy dict

    def write_csv(self, path):
        names = [n for n in VARIANT_ORDER if n in self.rmse]
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["horizon_s"] + names)
            for i, h in enumerate(HORIZONS_S):
                w.writerow([h] + [f"{self.rmse[n][i]:.4f}" for n in names])

    def __str__(self):
        names = [n for n in VARIANT_ORDER if n in self.rmse]
        lines = ["horizon_s  " + "  ".join(f"{n:>9s}" for n in names)]
        for i, h in enumerate(HORIZONS_S):
            lines.append(f"{h:>9d}  " + "  ".join(
                f"{self.rmse[n][i]:>9.3f}" for n in names))
        for name, acc in self.accuracy.items():
            lines.append(f"{name} accuracy: lat={acc['lateral']:.3f} "
                         f"lon={acc['longitudinal']:.3f} joint={acc['joint']:.3f}")
        return "\n".join(lines)


def make_benchmark(n_vehicles=600, seed=42, pct_lane_changes=0.3,
                   pct_braking=0.3, duration_s=40.0):
    """Interaction-rich synthetic benchmark; returns (train, test) samples."""
    cfg = synth.SynthConfig(n_vehicles=n_vehicles, n_lanes=3,
                            duration_s=duration_s,
                            pct_lane_changes=pct_lane_changes,
                            pct_braking=pct_braking)
    store, events = synth.generate(cfg, seed)
    rng = np.random.default_rng(seed + 1)
    times = synth.sample_times(events, store, rng)
    samples = []
    for vid, t in times:
        s = trackstore.build_sample(store, vid, t)
        if s is not None:
            samples.append(s)
    train_vids, test_vids = trackstore.split_train_test(store, seed + 2)
    test_set = set(test_vids)
    train = [s for s in samples if s.vehicle_id not in test_set]
    test = [s for s in samples if s.vehicle_id in test_set]
    return train, test


def run_ablation(train_samples, test_samples, seed=0, epochs=20, batch=128,
                 lr=0.001, variants=VARIANT_ORDER):
    """Train and evaluate CV and the four LSTM variants on one dataset."""
    truths = np.stack([s.future for s in test_samples])
    truth_labels = [s.label for s in test_samples]
    result = AblationResult()

    if "CV" in variants:
        log.info("evaluating CV baseline")
        result.rmse["CV"] = rmse_table(predict_points_cv(test_samples), truths)

    trained = {}
    for name in ("V_LSTM", "S_LSTM"):
        if name not in variants:
            continue
        log.info("training %s", name)
        cfg = ModelConfig(variant=Variant[name])
        m, _ = M.train(train_samples, cfg, epochs=epochs, batch=batch,
                       seed=seed, lr=lr)
        trained[name] = m
        result.rmse[name] = rmse_table(predict_points_model(test_samples, m),
                                       truths)

    if "M_LSTM" in variants or "M_LSTM_GT" in variants:
        log.info("training M_LSTM")
        cfg = ModelConfig(variant=Variant.M_LSTM)
        m, _ = M.train(train_samples, cfg, epochs=epochs, batch=batch,
                       seed=seed, lr=lr)
        trained["M_LSTM"] = m
        if "M_LSTM" in variants:
            pred_labels = classify_batch(test_samples, m)
            result.accuracy["M_LSTM"] = maneuver_accuracy(pred_labels,
                                                          truth_labels)
            result.rmse["M_LSTM"] = rmse_table(
                predict_points_model(test_samples, m, pred_labels), truths)
        if "M_LSTM_GT" in variants:
            # same weights, ground-truth maneuvers at evaluation
            gt = Model(cfg=ModelConfig(variant=Variant.M_LSTM_GT),
                       traj=m.traj, cls=None, norm=m.norm)
            result.rmse["M_LSTM_GT"] = rmse_table(
                predict_points_model(test_samples, gt, truth_labels), truths)
    return result, trained
