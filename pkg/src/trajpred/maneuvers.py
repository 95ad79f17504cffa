"""Maneuver labeling from raw tracks.

Lateral labels come from lane-ID cross-overs within +/-4 s of the query
frame (smaller lane ID = further left, NGSIM convention, so a decrease is
a left change). Longitudinal labels use the ratio of mean future speed to
current speed with a 0.8 threshold. Both are pure functions of the track.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import FrameRangeError

FRAME_RATE_HZ = 10.0
LATERAL_WINDOW_FRAMES = 40     # +/- 4 s at 10 Hz
LONGITUDINAL_HORIZON_FRAMES = 50
BRAKE_RATIO = 0.8
MIN_SPEED = 0.1                # m/s; below this the ratio rule is ill-posed


class Lateral(IntEnum):
    KEEP = 0
    LEFT = 1
    RIGHT = 2


class Longitudinal(IntEnum):
    NORMAL = 0
    BRAKE = 1


@dataclass(frozen=True)
class ManeuverLabel:
    lateral: Lateral
    longitudinal: Longitudinal

    @property
    def joint_index(self) -> int:
        """Joint class in [0, 5]: 2 * lateral + longitudinal."""
        return 2 * int(self.lateral) + int(self.longitudinal)

    @classmethod
    def from_joint_index(cls, idx: int) -> "ManeuverLabel":
        if not 0 <= idx <= 5:
            raise ValueError(f"joint index {idx} out of [0, 5]")
        return cls(Lateral(idx // 2), Longitudinal(idx % 2))


def label_lateral(track, t: int) -> Lateral:
    """Lateral maneuver at frame t from lane-ID cross-overs within +/-4 s.

    A cross-over at frame c is the first frame carrying the new lane ID.
    The cross-over nearest to t wins; on a distance tie the earlier one.
    Windows extending past the track are clipped to the available frames.
    """
    idx_t = track.index_of(t)
    if idx_t is None:
        raise FrameRangeError(f"vehicle {track.vehicle_id} has no frame {t}")
    lanes = track.lane_ids
    frames = track.frame_ids
    lo = max(t - LATERAL_WINDOW_FRAMES, frames[0])
    hi = min(t + LATERAL_WINDOW_FRAMES, frames[-1])
    best = None  # (|c - t|, c, direction)
    change_idx = np.nonzero(np.diff(lanes))[0] + 1
    for i in change_idx:
        c = int(frames[i])
        if c < lo or c > hi:
            continue
        direction = Lateral.LEFT if lanes[i] < lanes[i - 1] else Lateral.RIGHT
        key = (abs(c - t), c)
        if best is None or key < best[0]:
            best = (key, direction)
    return best[1] if best is not None else Lateral.KEEP


def _speeds(track) -> np.ndarray:
    """Per-frame speed magnitude from positions by central differences."""
    xy = track.xy
    if len(xy) < 2:
        return np.zeros(len(xy))
    vel = np.gradient(xy, 1.0 / FRAME_RATE_HZ, axis=0)
    return np.hypot(vel[:, 0], vel[:, 1])


def label_longitudinal(track, t: int,
                       horizon: int = LONGITUDINAL_HORIZON_FRAMES) -> Longitudinal:
    """Brake iff mean speed over (t, t+horizon] < 0.8 x speed at t.

    Speeds come from positions (central differences at 10 Hz, one-sided at
    the track ends). A near-stationary vehicle (speed < 0.1 m/s at t)
    labels Normal since the ratio is degenerate.
    """
    idx_t = track.index_of(t)
    idx_end = track.index_of(t + horizon)
    if idx_t is None or idx_end is None:
        raise FrameRangeError(
            f"vehicle {track.vehicle_id} does not cover [{t}, {t + horizon}]")
    speeds = _speeds(track)
    v_now = speeds[idx_t]
    if v_now < MIN_SPEED:
        return Longitudinal.NORMAL
    mean_future = speeds[idx_t + 1:idx_end + 1].mean()
    return Longitudinal.BRAKE if mean_future < BRAKE_RATIO * v_now else Longitudinal.NORMAL


def label(track, t: int) -> ManeuverLabel:
    return ManeuverLabel(label_lateral(track, t), label_longitudinal(track, t))
