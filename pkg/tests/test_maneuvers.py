import numpy as np
import pytest

from trajpred import maneuvers
from trajpred.maneuvers import Lateral, Longitudinal, ManeuverLabel
from trajpred.trackstore import VehicleTrack


def make_track(increments, lanes=None, vid=1):
    """Track from per-frame y increments (meters per 0.1 s); x = 0."""
    y = np.concatenate([[0.0], np.cumsum(increments)])
    n = len(y)
    frames = np.arange(n)
    if lanes is None:
        lanes = np.full(n, 2)
    return VehicleTrack(vid, frames, np.column_stack([np.zeros(n), y]), lanes)


def const_lane_track(n, lane_changes=()):
    """Constant-speed track; lane_changes = [(frame, new_lane), ...]."""
    lanes = np.full(n, 3)
    for frame, new in lane_changes:
        lanes[frame:] = new
    return make_track(np.full(n - 1, 1.0), lanes)


def test_keep_lane_constant():
    tr = const_lane_track(200)
    assert maneuvers.label_lateral(tr, 100) == Lateral.KEEP


def test_change_left_within_window():
    tr = const_lane_track(200, [(120, 2)])   # 3 -> 2 at t+20
    assert maneuvers.label_lateral(tr, 100) == Lateral.LEFT


def test_change_outside_window_is_keep():
    tr = const_lane_track(200, [(141, 4)])   # 3 -> 4 at t+41
    assert maneuvers.label_lateral(tr, 100) == Lateral.KEEP
    assert maneuvers.label_lateral(tr, 101) == Lateral.RIGHT


def test_nearest_crossover_wins():
    tr = const_lane_track(300, [(110, 2), (145, 3)])
    assert maneuvers.label_lateral(tr, 100) == Lateral.LEFT   # 10 < 45
    assert maneuvers.label_lateral(tr, 140) == Lateral.RIGHT  # 5 < 30


def test_crossover_tie_prefers_earlier():
    tr = const_lane_track(300, [(90, 2), (110, 3)])
    assert maneuvers.label_lateral(tr, 100) == Lateral.LEFT


def test_window_clipped_at_track_start():
    tr = const_lane_track(120, [(10, 2)])
    assert maneuvers.label_lateral(tr, 5) == Lateral.LEFT


def brake_track(d):
    """Exact speed 10 m/s at t=60, then increments d after t+1."""
    inc = np.concatenate([np.full(61, 1.0), np.full(55, d)])
    return make_track(inc)


def test_brake_below_threshold():
    # mean future speed 0.1 + 9.9 d; d chosen for mean 7.9 < 8.0
    tr = brake_track((7.9 - 0.1) / 9.9)
    assert maneuvers.label_longitudinal(tr, 60) == Longitudinal.BRAKE


def test_normal_above_threshold():
    tr = brake_track((8.1 - 0.1) / 9.9)
    assert maneuvers.label_longitudinal(tr, 60) == Longitudinal.NORMAL


def test_constant_speed_is_normal():
    tr = make_track(np.full(150, 1.3))
    assert maneuvers.label_longitudinal(tr, 50) == Longitudinal.NORMAL


def test_near_zero_speed_is_normal():
    tr = make_track(np.full(150, 0.005))  # 0.05 m/s < 0.1 threshold
    assert maneuvers.label_longitudinal(tr, 50) == Longitudinal.NORMAL


def test_longitudinal_needs_future_coverage():
    tr = make_track(np.full(60, 1.0))
    with pytest.raises(Exception):
        maneuvers.label_longitudinal(tr, 30)


def test_labeling_is_repeatable():
    tr = const_lane_track(300, [(150, 2)])
    labs = {maneuvers.label(tr, 140) for _ in range(5)}
    assert len(labs) == 1


def test_joint_index_bijection():
    seen = set()
    for lat in Lateral:
        for lon in Longitudinal:
            idx = ManeuverLabel(lat, lon).joint_index
            assert 0 <= idx <= 5
            seen.add(idx)
            assert ManeuverLabel.from_joint_index(idx) == ManeuverLabel(lat, lon)
    assert seen == set(range(6))


def test_from_joint_index_range():
    with pytest.raises(ValueError):
        ManeuverLabel.from_joint_index(6)
