"""Beam super-sampling and radiation-pattern weighted aggregation.

Each beam is represented by S rays inside its azimuth/elevation opening
cone. Ray 0 is always the exact beam centre; the remaining S-1 offsets are
drawn uniformly. Per-ray predictions are merged with weights
A(a_i) * E(e_i) normalised to sum to one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfig, ShapeMismatch, ZeroWeightSum
from .geometry import sensor_directions
from .radar import RadarConfig, pattern_gain


@dataclass
class BeamSampleSet:
    azimuth: float
    a: np.ndarray          # (S,) azimuth offsets, rad
    e: np.ndarray          # (S,) elevation offsets, rad
    directions: np.ndarray  # (S, 3) unit vectors, sensor frame

    @property
    def size(self) -> int:
        return self.a.shape[0]

    def weights(self, cfg: RadarConfig) -> np.ndarray:
        return pattern_weights(self.a, self.e, cfg)


def draw_offsets(n_beams: int, cfg: RadarConfig, S: int, rng):
    """Offsets (n_beams, S) for many beams at once; column 0 is the beam centre."""
    if S < 1:
        raise DegenerateConfig("need at least one sample per beam")
    a = np.zeros((n_beams, S))
    e = np.zeros((n_beams, S))
    if S > 1:
        a[:, 1:] = rng.uniform(-cfg.half_fov_azimuth, cfg.half_fov_azimuth, size=(n_beams, S - 1))
        e[:, 1:] = rng.uniform(-cfg.half_fov_elevation, cfg.half_fov_elevation, size=(n_beams, S - 1))
    return a, e


def draw_samples(beam_azimuth: float, cfg: RadarConfig, S: int, rng) -> BeamSampleSet:
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    a, e = draw_offsets(1, cfg, S, rng)
    a, e = a[0], e[0]
    return BeamSampleSet(float(beam_azimuth), a, e, sensor_directions(beam_azimuth + a, e))


def pattern_weights(a, e, cfg: RadarConfig) -> np.ndarray:
    return pattern_gain(cfg.azimuth_pattern, a) * pattern_gain(cfg.elevation_pattern, e)


def aggregate_sigma(sigmas, samples: BeamSampleSet, cfg: RadarConfig):
    """Pattern-weighted mean of per-ray values over the last axis (length S).

    ``sigmas`` may be (S,) or (S, B) with rays on axis 0.
    """
    s = np.asarray(sigmas, dtype=float)
    if s.shape[0] != samples.size:
        raise ShapeMismatch(f"{s.shape[0]} values for {samples.size} samples")
    w = samples.weights(cfg)
    total = w.sum()
    if not total > 0:
        raise ZeroWeightSum("radiation pattern weights sum to zero")
    out = np.tensordot(w, s, axes=(0, 0)) / total
    return float(out) if np.ndim(out) == 0 else out


def normalized_weights(a, e, cfg: RadarConfig) -> np.ndarray:
    """Pattern weights for offsets (..., S) normalised over the last axis."""
    w = pattern_weights(a, e, cfg)
    total = w.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ZeroWeightSum("radiation pattern weights sum to zero")
    return w / total


def sample_points(pose, samples: BeamSampleSet, ranges) -> np.ndarray:
    """World points (S, B): sensor origin + R_b * direction_i."""
    pose = np.asarray(pose, float)
    dirs_w = samples.directions @ pose[:3, :3].T
    r = np.asarray(ranges, float)
    return pose[:3, 3] + dirs_w[:, None, :] * r[None, :, None]
