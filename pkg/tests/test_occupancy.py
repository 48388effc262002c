import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from radarfields.errors import EmptySequence
from radarfields.geometry import BevGrid, pose_matrix
from radarfields.occupancy import (GridMap, OccupancyParams, estimate_occupancy, frame_log_odds,
                                   grid_map_accumulate, grid_map_to_points, noise_threshold)
from radarfields.radar import RadarConfig, RadarFrame

P = OccupancyParams()


def _frame(power, pose=None, az=None):
    power = np.asarray(power, np.float32)
    if az is None:
        az = np.arange(power.shape[0]) * 2 * math.pi / power.shape[0]
    return RadarFrame(np.eye(4) if pose is None else pose, az, power)


def test_all_zero_frame_is_free():
    est = estimate_occupancy(_frame(np.zeros((3, 10))), 1.0)
    assert np.all(est.probabilities == P.p_free)


def test_single_return_hand_case():
    pw = np.zeros((2, 10))
    pw[0, 4] = 5.0
    est = estimate_occupancy(_frame(pw), 1.0)
    row = est.probabilities[0]
    np.testing.assert_array_equal(row[:4], P.p_free)
    assert row[4] == P.p_occ
    np.testing.assert_array_equal(row[5:], 0.5)
    np.testing.assert_array_equal(est.probabilities[1], P.p_free)


def test_run_scaled_by_excess_power():
    pw = np.zeros((1, 8))
    pw[0, 2:5] = [2.0, 5.0, 3.0]
    pw[0, 6] = 9.0  # second run, behind the first: unknown
    p = estimate_occupancy(_frame(pw), 1.0).probabilities[0]
    np.testing.assert_allclose(p[2:5], 0.5 + 0.45 * np.array([1, 4, 2]) / 4)
    assert p[5] == 0.5 and p[6] == 0.5


def test_clamp_applied():
    params = OccupancyParams(p_free=0.0, p_occ=1.0, p_min=0.05, p_max=0.9)
    pw = np.zeros((1, 6))
    pw[0, 3] = 2.0
    p = estimate_occupancy(_frame(pw), 1.0, params).probabilities
    assert p.min() == 0.05 and p.max() == 0.9


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 12), elements=st.floats(0, 10)), st.floats(0.1, 9))
def test_probabilities_in_clamp_range(pw, thr):
    p = estimate_occupancy(_frame(pw), thr).probabilities
    assert np.all((p >= P.p_min) & (p <= P.p_max))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (6, 10), elements=st.floats(0, 10)), st.integers(0, 2 ** 32 - 1))
def test_ray_independence_under_permutation(pw, seed):
    # with a fixed threshold every ray is processed on its own
    perm = np.random.default_rng(seed).permutation(6)
    a = estimate_occupancy(_frame(pw), 4.0).probabilities
    b = estimate_occupancy(_frame(pw[perm]), 4.0).probabilities
    np.testing.assert_array_equal(a[perm], b)
    other = pw.copy()
    other[1:] = np.random.default_rng(seed).uniform(0, 10, size=(5, 10))
    c = estimate_occupancy(_frame(other), 4.0).probabilities
    np.testing.assert_array_equal(a[0], c[0])


def test_noise_threshold():
    pw = np.zeros((2, 10))
    pw[:, -1] = [1.0, 3.0]
    thr = noise_threshold(_frame(pw))
    tail = pw[:, -1:]
    assert thr == pytest.approx(tail.mean() + 3 * tail.std())
    assert noise_threshold(_frame(np.zeros((2, 10)))) > 0
    with pytest.raises(ValueError):
        estimate_occupancy(_frame(pw), 0.0)


def _target_frame(pose, cfg, target_xy):
    """Frame with a single detection where a beam passes the target cell."""
    pw = np.zeros((cfg.n_azimuth, cfg.n_bins))
    rel = np.asarray(target_xy) - pose[:2, 3]
    yaw = math.atan2(pose[1, 0], pose[0, 0])
    az = (math.atan2(rel[1], rel[0]) - yaw) % (2 * math.pi)
    k = int(round(az / (2 * math.pi / cfg.n_azimuth))) % cfg.n_azimuth
    b = int(round(np.linalg.norm(rel) / cfg.range_resolution))
    pw[k, b] = 1.0
    pw[:, -10:] = 1e-6
    return RadarFrame(pose, cfg.beam_azimuths(), pw)


def test_single_frame_map_equals_increment():
    cfg = RadarConfig(n_bins=40, n_azimuth=90)
    f = _target_frame(pose_matrix([0, 0, 1]), cfg, (3.0, 0.0))
    gm = grid_map_accumulate([f], 0.25, cfg, bounds=((-6, -6), (6, 6)))
    inc = frame_log_odds(f, cfg, gm.grid)
    np.testing.assert_array_equal(gm.log_odds, inc)
    pts = grid_map_to_points(gm)
    assert len(pts) >= 1 and np.min(np.linalg.norm(pts - [3.0, 0.0], axis=1)) < 0.3


def test_additive_update_ten_poses():
    cfg = RadarConfig(n_bins=60, n_azimuth=360)
    target = (4.5, 1.5)  # centre of a 1 m cell
    poses = [pose_matrix([-1 + 0.2 * i, -2.0 + 0.1 * i, 1.0], 0.3 * i) for i in range(10)]
    frames = [_target_frame(p, cfg, target) for p in poses]
    bounds = ((-8, -8), (8, 8))
    gm = grid_map_accumulate(frames, 1.0, cfg, bounds=bounds)
    grid = gm.grid
    (i, j), _ = grid.cell_index(np.array(target))
    singles = [frame_log_odds(f, cfg, grid)[i, j] for f in frames]
    logit = math.log(P.p_occ / (1 - P.p_occ))
    assert all(s == pytest.approx(logit) for s in singles)
    assert gm.log_odds[i, j] == pytest.approx(10 * logit)


def test_order_invariance_and_clamp():
    cfg = RadarConfig(n_bins=40, n_azimuth=90)
    frames = [_target_frame(pose_matrix([0.1 * i, 0, 1], 0.2 * i), cfg, (3.0, 1.0)) for i in range(5)]
    a = grid_map_accumulate(frames, 0.5, cfg, bounds=((-6, -6), (6, 6)))
    b = grid_map_accumulate(frames[::-1], 0.5, cfg, bounds=((-6, -6), (6, 6)))
    np.testing.assert_allclose(a.log_odds, b.log_odds, atol=1e-12)
    c = grid_map_accumulate(frames, 0.5, cfg, bounds=((-6, -6), (6, 6)),
                            params=OccupancyParams(log_odds_clamp=1.0))
    assert np.abs(c.log_odds).max() <= 1.0


def test_grid_map_errors_and_empty():
    with pytest.raises(EmptySequence):
        grid_map_accumulate([], 0.5, RadarConfig())
    g = GridMap(np.zeros((4, 4)), BevGrid((0, 0), 1.0, (4, 4)))
    assert grid_map_to_points(g).shape == (0, 2)
    g.log_odds[1, 2] = 3.0
    np.testing.assert_array_equal(grid_map_to_points(g), [[1.5, 2.5]])
    assert grid_map_to_points(g, 0.99).shape == (0, 2)
    with pytest.raises(ValueError):
        grid_map_to_points(g, 1.0)
