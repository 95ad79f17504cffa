"""Deterministic synthetic freeway scenarios with scripted maneuvers.

Vehicles are kinematic scripts at 10 Hz: piecewise-constant longitudinal
speed with optional deceleration segments, and lane changes executed as a
smoothstep lateral ramp over 4 s centered on the cross-over frame. Every
braking vehicle gets a slower lead vehicle placed ahead in its lane, so
the impending deceleration is visible in the neighbor channels before it
starts. The whole scene is a pure function of (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .trackstore import TrackStore, VehicleTrack

FRAME_DT = 0.1
RAMP_FRAMES = 40          # 4 s lane-change ramp
DECEL_FRAMES = 20         # 2 s speed ramp-down
EVENT_MARGIN = 80         # frames kept clear of track ends around an event
LEADER_ID_BASE = 10000
LEADER_GAP_M = 20.0   # gap at brake onset; stays positive through the ramp


@dataclass
class SynthConfig:
    n_vehicles: int = 20
    n_lanes: int = 3
    duration_s: float = 60.0
    lane_width_m: float = 3.7
    pct_lane_changes: float = 0.0
    pct_braking: float = 0.0
    speed_min: float = 12.0
    speed_max: float = 26.0
    dataset_tag: str = "synth"


@dataclass(frozen=True)
class LaneChangeEvent:
    vehicle_id: int
    crossover_frame: int
    direction: str            # "left" or "right"
    from_lane: int
    to_lane: int


@dataclass(frozen=True)
class BrakeEvent:
    vehicle_id: int
    start_frame: int
    decel_frames: int
    ratio: float              # target speed / initial speed
    leader_id: int


def smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return 3.0 * u ** 2 - 2.0 * u ** 3


def _lane_center(lane, lane_width):
    return lane_width * (lane - 0.5)


def generate(config: SynthConfig, seed: int):
    """Build the scene; returns (TrackStore, list of script events)."""
    n_frames = int(round(config.duration_s / FRAME_DT)) + 1
    n_lc = int(round(config.pct_lane_changes * config.n_vehicles))
    n_br = int(round(config.pct_braking * config.n_vehicles))
    if n_lc + n_br > config.n_vehicles:
        raise ConfigError("more scripted events than vehicles")
    if (n_lc or n_br) and n_frames < 2 * EVENT_MARGIN + 1:
        raise ConfigError(
            f"duration {config.duration_s}s too short for scripted events")
    if n_lc and config.n_lanes < 2:
        raise ConfigError("lane changes need at least 2 lanes")

    rng = np.random.default_rng(seed)
    frames = np.arange(n_frames)
    tracks = {}
    events = []

    for vid in range(1, config.n_vehicles + 1):
        lane = int(rng.integers(1, config.n_lanes + 1))
        speed = float(rng.uniform(config.speed_min, config.speed_max))
        # large stagger keeps unrelated vehicles from interacting
        y0 = float(vid * 200.0 + rng.uniform(0.0, 50.0))
        speeds = np.full(n_frames, speed)
        lane_ids = np.full(n_frames, lane, dtype=np.int64)
        x = np.full(n_frames, _lane_center(lane, config.lane_width_m))

        if vid <= n_lc:
            # scripted lane change
            c = int(rng.integers(EVENT_MARGIN, n_frames - EVENT_MARGIN))
            choices = []
            if lane > 1:
                choices.append(-1)
            if lane < config.n_lanes:
                choices.append(+1)
            delta = int(rng.choice(choices))
            to_lane = lane + delta
            u = (frames - (c - RAMP_FRAMES // 2)) / RAMP_FRAMES
            x = _lane_center(lane, config.lane_width_m) + smoothstep(u) * (
                _lane_center(to_lane, config.lane_width_m)
                - _lane_center(lane, config.lane_width_m))
            lane_ids[frames >= c] = to_lane
            events.append(LaneChangeEvent(
                vehicle_id=vid, crossover_frame=c,
                direction="left" if delta < 0 else "right",
                from_lane=lane, to_lane=to_lane))
        elif vid <= n_lc + n_br:
            # scripted braking triggered by a slower lead vehicle
            t_b = int(rng.integers(EVENT_MARGIN, n_frames - EVENT_MARGIN))
            ratio = float(rng.uniform(0.4, 0.6))
            ramp = np.clip((frames - t_b) / DECEL_FRAMES, 0.0, 1.0)
            speeds = speed * (1.0 - (1.0 - ratio) * ramp)
            leader_id = LEADER_ID_BASE + vid
            y_ego_tb = y0 + speed * t_b * FRAME_DT
            yl0 = y_ego_tb + LEADER_GAP_M - ratio * speed * t_b * FRAME_DT
            yl = yl0 + ratio * speed * frames * FRAME_DT
            xl = np.full(n_frames, _lane_center(lane, config.lane_width_m))
            tracks[leader_id] = VehicleTrack(
                leader_id, frames, np.column_stack([xl, yl]),
                np.full(n_frames, lane, dtype=np.int64))
            events.append(BrakeEvent(
                vehicle_id=vid, start_frame=t_b, decel_frames=DECEL_FRAMES,
                ratio=ratio, leader_id=leader_id))

        y = y0 + np.concatenate([[0.0], np.cumsum(speeds[:-1]) * FRAME_DT])
        tracks[vid] = VehicleTrack(vid, frames, np.column_stack([x, y]), lane_ids)

    tags = {vid: config.dataset_tag for vid in tracks}
    store = TrackStore(tracks, dataset_tag=config.dataset_tag, subset_tags=tags)
    return store, events


def sample_times(events, store, rng=None, keep_per_vehicle=2):
    """(vehicle, frame) query points for benchmark sample building.

    Event vehicles are sampled at offsets where the maneuver leaves a cue
    in the history window (partial lane-change ramp, slow closing lead
    vehicle); event-free vehicles contribute keep-lane/normal points.
    """
    rng = rng or np.random.default_rng(0)
    event_vids = set()
    out = []
    for ev in events:
        event_vids.add(ev.vehicle_id)
        if isinstance(ev, LaneChangeEvent):
            offsets = (-10, 0, 10, 20)
            base = ev.crossover_frame
        else:
            offsets = (0, 5, 10)
            base = ev.start_frame
        for off in offsets:
            out.append((ev.vehicle_id, base + off))
    for vid in sorted(store.tracks):
        if vid in event_vids:
            continue
        tr = store.tracks[vid]
        lo = int(tr.frame_ids[0]) + EVENT_MARGIN
        hi = int(tr.frame_ids[-1]) - EVENT_MARGIN
        if hi <= lo:
            continue
        for _ in range(keep_per_vehicle):
            t = int(rng.integers(lo, hi + 1))
            out.append((vid, t - t % 2))
    return out


def store_to_lines(store: TrackStore):
    """Render a store in the delimited format parse_trajectories reads."""
    yield "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID"
    for vid in sorted(store.tracks):
        tr = store.tracks[vid]
        for f, (x, y), lane in zip(tr.frame_ids, tr.xy, tr.lane_ids):
            yield f"{vid},{f},{x:.6f},{y:.6f},{lane}"


def events_to_dicts(events):
    out = []
    for ev in events:
        if isinstance(ev, LaneChangeEvent):
            out.append({"kind": "lane_change", "vehicle_id": ev.vehicle_id,
                        "crossover_frame": ev.crossover_frame,
                        "direction": ev.direction,
                        "from_lane": ev.from_lane, "to_lane": ev.to_lane})
        else:
            out.append({"kind": "brake", "vehicle_id": ev.vehicle_id,
                        "start_frame": ev.start_frame,
                        "decel_frames": ev.decel_frames,
                        "ratio": ev.ratio, "leader_id": ev.leader_id})
    return out
