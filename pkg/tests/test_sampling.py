import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarfields.errors import DegenerateConfig, ShapeMismatch
from radarfields.radar import RadarConfig, RadiationPattern
from radarfields.sampling import (BeamSampleSet, aggregate_sigma, draw_offsets, draw_samples,
                                  normalized_weights, sample_points)
from radarfields.geometry import sensor_directions

UNIFORM = RadarConfig(azimuth_pattern=RadiationPattern("uniform"), elevation_pattern=RadiationPattern("uniform"))


def _set(a, e, az=0.0):
    a, e = np.asarray(a, float), np.asarray(e, float)
    return BeamSampleSet(az, a, e, sensor_directions(az + a, e))


def test_s1_is_beam_centre():
    s = draw_samples(0.7, RadarConfig(), 1, 0)
    assert s.size == 1 and s.a[0] == 0 and s.e[0] == 0
    np.testing.assert_allclose(s.directions[0], [math.cos(0.7), math.sin(0.7), 0.0])


def test_degenerate_s():
    with pytest.raises(DegenerateConfig):
        draw_offsets(3, RadarConfig(), 0, np.random.default_rng(0))


def test_offsets_inside_cone():
    cfg = RadarConfig()
    a, e = draw_offsets(50, cfg, 16, np.random.default_rng(1))
    assert np.all(np.abs(a) <= cfg.half_fov_azimuth) and np.all(np.abs(e) <= cfg.half_fov_elevation)
    assert np.all(a[:, 0] == 0) and np.all(e[:, 0] == 0)


def test_offset_mean_monte_carlo():
    cfg = RadarConfig()
    a, _ = draw_offsets(1, cfg, 100_001, np.random.default_rng(2))
    A = cfg.half_fov_azimuth
    sd = A / math.sqrt(3) / math.sqrt(100_000)
    assert abs(a[0, 1:].mean()) < 3 * sd


def test_aggregate_uniform_hand_cases():
    assert aggregate_sigma([2.0, 4.0], _set([0.0, 0.01], [0.0, 0.1]), UNIFORM) == pytest.approx(3.0, abs=1e-12)
    assert aggregate_sigma([5.0], _set([0.0], [0.0]), UNIFORM) == 5.0


def test_aggregate_weighted_hand_case():
    # azimuth offset chosen so its gaussian gain is exactly 1/3 of the boresight ray
    h = 0.1
    cfg = RadarConfig(azimuth_pattern=RadiationPattern("gaussian", h),
                      elevation_pattern=RadiationPattern("uniform"), half_fov_azimuth=0.5)
    a1 = h * math.sqrt(math.log(3.0) / (4 * math.log(2.0)))
    s = _set([a1, 0.0], [0.0, 0.0])
    np.testing.assert_allclose(s.weights(cfg), [1 / 3, 1.0], rtol=1e-12)
    assert aggregate_sigma([0.0, 4.0], s, cfg) == pytest.approx(3.0, abs=1e-12)


def test_aggregate_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        aggregate_sigma([1.0, 2.0, 3.0], _set([0.0, 0.0], [0.0, 0.0]), UNIFORM)


def test_aggregate_matrix_input():
    s = _set([0.0, 0.01, -0.01], [0.0, 0.0, 0.1])
    sig = np.arange(12.0).reshape(3, 4)
    np.testing.assert_allclose(aggregate_sigma(sig, s, UNIFORM), sig.mean(axis=0), atol=1e-12)


def test_aggregate_properties_1000_trials():
    rng = np.random.default_rng(3)
    cfg = RadarConfig()
    for _ in range(1000):
        S = int(rng.integers(1, 20))
        s = draw_samples(rng.uniform(0, 2 * math.pi), cfg, S, rng)
        sig = rng.uniform(0, 10, S)
        agg = aggregate_sigma(sig, s, cfg)
        # uniform patterns reduce to the arithmetic mean
        assert abs(aggregate_sigma(sig, s, UNIFORM) - sig.mean()) < 1e-12
        # convex combination
        assert sig.min() - 1e-12 <= agg <= sig.max() + 1e-12
        # permutation of (ray, value) pairs
        p = rng.permutation(S)
        perm = _set(s.a[p], s.e[p], s.azimuth)
        assert abs(aggregate_sigma(sig[p], perm, cfg) - agg) < 1e-12
        # homogeneity
        c = rng.uniform(0.1, 10)
        assert abs(aggregate_sigma(c * sig, s, cfg) - c * agg) < 1e-9 * max(1.0, c * agg)


@settings(max_examples=50)
@given(st.integers(1, 8), st.integers(1, 16))
def test_normalized_weights_sum_to_one(n, S):
    cfg = RadarConfig()
    a, e = draw_offsets(n, cfg, S, np.random.default_rng(n * 31 + S))
    w = normalized_weights(a, e, cfg)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, rtol=1e-12)
    assert np.all(w > 0)


def test_sample_points_identity_boresight():
    s = _set([0.0], [0.0])
    pts = sample_points(np.eye(4), s, [1.0])
    np.testing.assert_allclose(pts[0, 0], [1.0, 0.0, 0.0], atol=1e-15)


def test_sample_points_translated_rotated():
    from radarfields.geometry import pose_matrix
    T = pose_matrix([1.0, 2.0, 0.5], math.pi / 2)
    pts = sample_points(T, _set([0.0], [0.0]), [2.0, 3.0])
    np.testing.assert_allclose(pts[0], [[1.0, 4.0, 0.5], [1.0, 5.0, 0.5]], atol=1e-12)
