"""Constant-velocity Kalman filter baseline.

State is (x, y, vx, vy) with a white-acceleration process noise model.
The filter runs predict/update over the 5 Hz history (dt = 0.2 s) from a
diffuse start, then predicts forward without measurements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DT = 0.2                      # 5 Hz working rate
MEASUREMENT_STD = 0.5         # m per axis
ACCEL_STD = 1.0               # m/s^2, white-acceleration process noise
INIT_VAR = 1e4


@dataclass
class KalmanState:
    mean: np.ndarray          # (4,) x, y, vx, vy
    cov: np.ndarray           # (4, 4) symmetric PSD


def _matrices(dt, accel_std, meas_std):
    F = np.eye(4)
    F[0, 2] = dt
    F[1, 3] = dt
    H = np.zeros((2, 4))
    H[0, 0] = 1.0
    H[1, 1] = 1.0
    # white-acceleration noise, per-axis [[dt^4/4, dt^3/2], [dt^3/2, dt^2]]
    q = accel_std ** 2
    Q = np.zeros((4, 4))
    for ax in range(2):
        p, v = ax, ax + 2
        Q[p, p] = q * dt ** 4 / 4.0
        Q[p, v] = Q[v, p] = q * dt ** 3 / 2.0
        Q[v, v] = q * dt ** 2
    R = meas_std ** 2 * np.eye(2)
    return F, H, Q, R


def _symmetrize(P):
    return (P + P.T) / 2.0


class CVKalman:
    """Constant-velocity filter over 2-D positions."""

    def __init__(self, dt=DT, accel_std=ACCEL_STD, meas_std=MEASUREMENT_STD):
        self.F, self.H, self.Q, self.R = _matrices(dt, accel_std, meas_std)
        self.state = None

    def start(self, position, velocity=(0.0, 0.0)):
        mean = np.array([position[0], position[1], velocity[0], velocity[1]])
        self.state = KalmanState(mean=mean, cov=INIT_VAR * np.eye(4))

    def predict(self):
        s = self.state
        s.mean = self.F @ s.mean
        s.cov = _symmetrize(self.F @ s.cov @ self.F.T + self.Q)

    def update(self, position):
        s = self.state
        z = np.asarray(position, dtype=np.float64)
        y = z - self.H @ s.mean
        S = self.H @ s.cov @ self.H.T + self.R
        K = s.cov @ self.H.T @ np.linalg.inv(S)
        s.mean = s.mean + K @ y
        I_KH = np.eye(4) - K @ self.H
        # Joseph form keeps the covariance symmetric PSD
        s.cov = _symmetrize(I_KH @ s.cov @ I_KH.T + K @ self.R @ K.T)

    def run_history(self, history):
        hist = np.asarray(history, dtype=np.float64).reshape(-1, 2)
        if len(hist) < 2:
            raise ValueError("need at least 2 history points")
        # two-point differencing start: exact on noise-free CV input
        dt = self.F[0, 2]
        self.start(hist[1], (hist[1] - hist[0]) / dt)
        for z in hist[2:]:
            self.predict()
            self.update(z)
        return self.state


def cv_filter_predict(history, horizon, dt=DT, accel_std=ACCEL_STD,
                      meas_std=MEASUREMENT_STD):
    """Filter the history then predict `horizon` steps; (horizon, 2) means."""
    kf = CVKalman(dt=dt, accel_std=accel_std, meas_std=meas_std)
    kf.run_history(history)
    out = np.zeros((horizon, 2))
    for k in range(horizon):
        kf.predict()
        out[k] = kf.state.mean[:2]
    return out
