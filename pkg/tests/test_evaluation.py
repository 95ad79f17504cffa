import numpy as np
import pytest

from trajpred import evaluation as ev
from trajpred import model as M
from trajpred.maneuvers import Lateral, Longitudinal, ManeuverLabel
from trajpred.model import (GaussianStep, ManeuverDistribution, ManeuverMode,
                            ModelConfig, Variant)


def test_rmse_perfect_predictions():
    pred = np.random.default_rng(0).normal(size=(10, 25, 2))
    np.testing.assert_array_equal(ev.rmse_table(pred, pred.copy()), 0.0)


def test_rmse_constant_offset_345():
    truth = np.random.default_rng(1).normal(size=(8, 25, 2))
    pred = truth + np.array([0.3, 0.4])
    np.testing.assert_allclose(ev.rmse_table(pred, truth), 0.5, atol=1e-12)


def test_rmse_reorder_invariant():
    rng = np.random.default_rng(2)
    truth = rng.normal(size=(20, 25, 2))
    pred = truth + rng.normal(size=(20, 25, 2))
    perm = rng.permutation(20)
    np.testing.assert_allclose(ev.rmse_table(pred, truth),
                               ev.rmse_table(pred[perm], truth[perm]))


def test_rmse_monotone_under_worse_sample():
    rng = np.random.default_rng(3)
    truth = rng.normal(size=(10, 25, 2))
    pred = truth + 0.1
    base = ev.rmse_table(pred, truth)
    worse_pred = np.concatenate([pred, truth[-1:] + 5.0])
    worse_truth = np.concatenate([truth, truth[-1:]])
    grown = ev.rmse_table(worse_pred, worse_truth)
    assert (grown > base).all()


def test_rmse_empty_raises():
    with pytest.raises(ValueError):
        ev.rmse_table([], [])


def mode(joint, p, mu=0.0):
    traj = [GaussianStep(mu, mu + k, 1.0, 1.0, 0.0) for k in range(25)]
    return ManeuverMode(label=ManeuverLabel.from_joint_index(joint),
                        probability=p, trajectory=traj)


def test_point_prediction_single_mode():
    dist = ManeuverDistribution(modes=[mode(0, 1.0, mu=2.0)])
    pts = ev.point_prediction(dist)
    assert pts.shape == (25, 2)
    np.testing.assert_allclose(pts[:, 0], 2.0)


def test_point_prediction_tie_breaks_low_index():
    dist = ManeuverDistribution(
        modes=[mode(0, 0.4, mu=1.0), mode(1, 0.4, mu=9.0),
               mode(2, 0.2), mode(3, 0.0), mode(4, 0.0), mode(5, 0.0)])
    np.testing.assert_allclose(ev.point_prediction(dist)[:, 0], 1.0)


def test_maneuver_accuracy_identical():
    labels = [ManeuverLabel.from_joint_index(i % 6) for i in range(12)]
    acc = ev.maneuver_accuracy(labels, list(labels))
    assert acc == {"lateral": 1.0, "longitudinal": 1.0, "joint": 1.0}


def test_maneuver_accuracy_axis_split():
    truth = [ManeuverLabel(Lateral.KEEP, Longitudinal.NORMAL)] * 10
    pred = [ManeuverLabel(Lateral.KEEP, Longitudinal.BRAKE)] * 10
    acc = ev.maneuver_accuracy(pred, truth)
    assert acc == {"lateral": 1.0, "longitudinal": 0.0, "joint": 0.0}


def test_maneuver_accuracy_random_uniform():
    rng = np.random.default_rng(4)
    n = 10_000
    truth = [ManeuverLabel.from_joint_index(int(rng.integers(6)))
             for _ in range(n)]
    pred = [ManeuverLabel.from_joint_index(int(rng.integers(6)))
            for _ in range(n)]
    acc = ev.maneuver_accuracy(pred, truth)
    assert abs(acc["joint"] - 1 / 6) < 0.05


def test_maneuver_accuracy_length_mismatch():
    with pytest.raises(ValueError):
        ev.maneuver_accuracy([ManeuverLabel.from_joint_index(0)], [])


def test_dist_to_dict_schema():
    dist = ManeuverDistribution(modes=[mode(i, 1 / 6) for i in range(6)])
    d = ev.dist_to_dict(dist)
    assert len(d["modes"]) == 6
    entry = d["modes"][3]
    assert entry["lateral"] == "LEFT" and entry["longitudinal"] == "BRAKE"
    step = entry["trajectory"][0]
    assert set(step) == {"t", "mux", "muy", "sx", "sy", "rho"}
    assert step["t"] == 1


def test_mixture_grid_integrates_to_one():
    dist = ManeuverDistribution(
        modes=[mode(0, 0.7), mode(2, 0.3)])
    xs, ys, dens = ev.mixture_density_grid(dist, -8, 8, -8, 32, 0.25)
    integral = dens.sum() * 0.25 * 0.25
    assert integral == pytest.approx(1.0, abs=0.01)


def test_grid_csv_roundtrip(tmp_path):
    dist = ManeuverDistribution(modes=[mode(0, 1.0)])
    xs, ys, dens = ev.mixture_density_grid(dist, -1, 1, -1, 1, 0.5)
    path = tmp_path / "grid.csv"
    ev.write_grid_csv(path, xs, ys, dens)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "x,y,density"
    assert len(rows) == 1 + len(xs) * len(ys)


def test_ablation_result_csv(tmp_path):
    res = ev.AblationResult(rmse={"CV": np.arange(1.0, 6.0),
                                  "M_LSTM": np.arange(0.5, 5.5)})
    path = tmp_path / "abl.csv"
    res.write_csv(path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "horizon_s,CV,M_LSTM"
    assert len(rows) == 6
    assert rows[1].startswith("1,1.0000,0.5000")


def test_run_ablation_smoke_shapes():
    train, test = ev.make_benchmark(n_vehicles=40, seed=5, duration_s=30.0)
    assert len(train) > 20 and len(test) > 3
    res, trained = ev.run_ablation(train, test, seed=0, epochs=1, batch=64)
    for name in ev.VARIANT_ORDER:
        assert name in res.rmse
        vals = res.rmse[name]
        assert vals.shape == (5,)
        assert np.isfinite(vals).all() and (vals > 0).all()
    assert "M_LSTM" in res.accuracy
