import warnings

import numpy as np
import pytest

from trajpred import trackstore as ts
from trajpred.errors import FrameRangeError, IntegrityError, SchemaError
from trajpred.maneuvers import Lateral, Longitudinal, ManeuverLabel

HEADER = "Vehicle_ID,Frame_ID,Local_X,Local_Y,Lane_ID"


def make_store(rows, **kw):
    return ts.parse_trajectories([HEADER] + rows, **kw)


def straight_track_rows(vid, n, x=5.0, speed=2.0, lane=2, start_frame=0):
    return [f"{vid},{start_frame + i},{x},{100.0 + speed * 0.1 * i},{lane}"
            for i in range(n)]


def test_feet_conversion():
    store = make_store(["5,100,20.0,300.0,2"], unit_mode="feet")
    pos = store.tracks[5].position(100)
    np.testing.assert_allclose(pos, [6.096, 91.44])


def test_empty_table():
    store = ts.parse_trajectories([HEADER])
    assert len(store) == 0


def test_duplicate_row_rejected():
    with pytest.raises(IntegrityError):
        make_store(["1,10,0,0,1", "1,10,0,1,1"])


def test_missing_column_named():
    with pytest.raises(SchemaError, match="Lane_ID"):
        ts.parse_trajectories(["Vehicle_ID,Frame_ID,Local_X,Local_Y",
                               "1,10,0,0"])


def test_rows_may_be_unsorted():
    store = make_store(["1,11,0,1.0,1", "1,10,0,0.5,1", "1,12,0,1.5,1"])
    assert list(store.tracks[1].frame_ids) == [10, 11, 12]


def test_whitespace_delimited_with_indices():
    cols = {"vehicle_id": 0, "frame_id": 1, "x": 2, "y": 3, "lane_id": 4}
    store = ts.parse_trajectories(["7 3 1.0 2.0 1"], columns=cols)
    assert store.tracks[7].position(3)[1] == 2.0


def test_implausible_step_rejected():
    with pytest.raises(IntegrityError, match="implausible"):
        make_store(["1,10,0,0,1", "1,11,0,6.0,1"])


def test_to_local_frame_origin_and_offsets():
    store = make_store(["1,50,6.2,100.5,2", "1,30,6.2,80.5,2",
                        "2,50,9.9,120.5,2"])
    assert ts.to_local_frame(store, 1, 50, 1, 50) == (0.0, 0.0)
    np.testing.assert_allclose(ts.to_local_frame(store, 1, 50, 2, 50),
                               (3.7, 20.0))
    np.testing.assert_allclose(ts.to_local_frame(store, 1, 50, 1, 30),
                               (0.0, -20.0))


def test_to_local_frame_missing_frame():
    store = make_store(["1,50,0,0,2"])
    with pytest.raises(FrameRangeError):
        ts.to_local_frame(store, 1, 50, 1, 49)


def one_frame_scene(specs):
    """specs: [(vid, lane, y)] all at frame 0."""
    rows = [f"{vid},0,{3.7 * (lane - 0.5)},{y},{lane}" for vid, lane, y in specs]
    return make_store(rows)


def test_neighbors_alone():
    store = one_frame_scene([(1, 2, 100.0)])
    assert ts.select_neighbors(store, 1, 0) == (None,) * 6


def test_neighbors_single_ahead():
    store = one_frame_scene([(1, 2, 100.0), (2, 2, 115.0)])
    assert ts.select_neighbors(store, 1, 0) == (2, None, None, None, None, None)


def brute_force_neighbors(store, ego, t):
    ego_tr = store.tracks[ego]
    ey = ego_tr.position(t)[1]
    lane = ego_tr.lane_at(t)
    slots = [None] * 6
    bests = [None] * 6
    for other in store.tracks:
        if other == ego or store.tracks[other].index_of(t) is None:
            continue
        ol = store.tracks[other].lane_at(t)
        dy = store.tracks[other].position(t)[1] - ey
        for k, ln in enumerate((lane, lane - 1, lane + 1)):
            if ol != ln:
                continue
            slot = 2 * k + (0 if dy >= 0 else 1)
            key = (abs(dy), other)
            if bests[slot] is None or key < bests[slot]:
                bests[slot] = key
                slots[slot] = other
    return tuple(slots)


@pytest.mark.parametrize("seed", range(200))
def test_neighbors_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 12))
    specs = [(vid, int(rng.integers(1, 5)), float(rng.uniform(0, 60)))
             for vid in range(1, n + 1)]
    store = one_frame_scene(specs)
    assert ts.select_neighbors(store, 1, 0) == brute_force_neighbors(store, 1, 0)


def test_build_sample_shapes_and_origin():
    rows = straight_track_rows(1, 81)
    store = make_store(rows)
    s = ts.build_sample(store, 1, 30)
    assert s.history.shape == (16, 14)
    assert s.future.shape == (25, 2)
    np.testing.assert_array_equal(s.history[15, 0:2], [0.0, 0.0])


def test_build_sample_insufficient_history_skips():
    store = make_store(straight_track_rows(1, 80))  # only 29 past at t=29
    assert ts.build_sample(store, 1, 29) is None


def test_build_sample_static_scene():
    rows = []
    for i in range(81):
        rows.append(f"1,{i},0.0,100.0,2")
        rows.append(f"2,{i},0.0,110.0,2")
    store = make_store(rows)
    s = ts.build_sample(store, 1, 30)
    expected_row = np.zeros(14)
    expected_row[2:4] = [0.0, 10.0]   # same-lane-ahead neighbor
    np.testing.assert_allclose(s.history, np.tile(expected_row, (16, 1)))
    np.testing.assert_allclose(s.future, 0.0)
    assert list(s.neighbor_mask) == [True, False, False, False, False, False]


def test_build_sample_roundtrip_global():
    store = make_store(straight_track_rows(1, 81, x=3.3, speed=15.0))
    s = ts.build_sample(store, 1, 30)
    track = store.tracks[1]
    ox, oy, t = s.origin
    for k, f in enumerate(range(t + 2, t + 51, 2)):
        np.testing.assert_allclose(s.future[k] + [ox, oy],
                                   track.position(f), atol=1e-9)


def test_build_samples_counts_skips():
    store = make_store(straight_track_rows(1, 85))
    samples, skipped = ts.build_samples(store)
    assert len(samples) == 3   # t in {30, 32, 34}
    assert skipped == 0


def multi_subset_store(counts):
    tracks, tags = {}, {}
    vid = 1
    for tag, n in counts.items():
        for _ in range(n):
            tracks[vid] = ts.VehicleTrack(vid, [0], [[0.0, 0.0]], [1])
            tags[vid] = tag
            vid += 1
    return ts.TrackStore(tracks, dataset_tag="multi", subset_tags=tags)


def test_split_quarter():
    store = multi_subset_store({"a": 100})
    train, test = ts.split_train_test(store, seed=3)
    assert len(test) == 25 and len(train) == 75
    assert set(train) | set(test) == set(store.tracks)
    assert not set(train) & set(test)


def test_split_deterministic():
    store = multi_subset_store({"a": 40, "b": 40, "c": 40})
    assert ts.split_train_test(store, 9) == ts.split_train_test(store, 9)


def test_split_three_subsets():
    store = multi_subset_store({"a": 40, "b": 40, "c": 40})
    train, test = ts.split_train_test(store, 1)
    assert len(test) == 30
    for tag in ("a", "b", "c"):
        assert sum(store.subset_tags[v] == tag for v in test) == 10


def test_split_tiny_subset_warns():
    store = multi_subset_store({"a": 2})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        train, test = ts.split_train_test(store, 0)
    assert len(test) == 1
    assert any("forcing" in str(w.message) for w in caught)


def sample_fixture():
    rng = np.random.default_rng(0)
    return ts.Sample(
        history=rng.normal(size=(16, 14)),
        future=rng.normal(size=(25, 2)),
        label=ManeuverLabel(Lateral.LEFT, Longitudinal.BRAKE),
        neighbor_mask=np.array([True, False, True, False, False, True]),
        origin=(12.5, 340.25, 510),
        vehicle_id=77,
    )


@pytest.mark.parametrize("fmt", ["jsonl", "binary"])
def test_sample_serialization_roundtrip(tmp_path, fmt):
    s = sample_fixture()
    path = tmp_path / f"samples.{fmt}"
    if fmt == "jsonl":
        ts.write_samples_jsonl(path, [s, s])
        back = ts.read_samples_jsonl(path)
    else:
        ts.write_samples_binary(path, [s, s])
        back = ts.read_samples_binary(path)
    assert len(back) == 2
    b = back[0]
    np.testing.assert_allclose(b.history, s.history)
    np.testing.assert_allclose(b.future, s.future)
    assert b.label == s.label
    assert list(b.neighbor_mask) == list(s.neighbor_mask)
    assert b.origin == s.origin
    assert b.vehicle_id == 77
