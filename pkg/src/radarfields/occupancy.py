"""Per-frame occupancy estimate from raw power and the log-odds grid-mapping baseline.

Inverse sensor model per azimuth ray, scanning outward in range:
free before the first detection, occupied across the first contiguous run of
detections (scaled by excess power), unknown (0.5) behind it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySequence
from .geometry import BevGrid
from .radar import RadarConfig, RadarFrame


@dataclass(frozen=True)
class OccupancyParams:
    p_free: float = 0.1
    p_occ: float = 0.95
    p_min: float = 0.02
    p_max: float = 0.98
    k_sigma: float = 3.0
    noise_fraction: float = 0.1  # trailing share of range bins used to estimate the noise floor
    log_odds_clamp: float = 50.0


@dataclass
class OccupancyEstimate:
    probabilities: np.ndarray  # (N_phi, N_b)
    threshold: float


def noise_threshold(frame: RadarFrame, params: OccupancyParams = OccupancyParams()) -> float:
    """mean + k*std of the farthest ``noise_fraction`` of range bins over all beams."""
    p = frame.power.astype(np.float64)
    n_tail = max(1, int(round(params.noise_fraction * p.shape[1])))
    tail = p[:, -n_tail:]
    thr = float(tail.mean() + params.k_sigma * tail.std())
    # an all-zero tail would make every positive bin a detection; keep the threshold positive
    return thr if thr > 0 else float(np.finfo(np.float32).tiny)


def estimate_occupancy(frame: RadarFrame, detection_threshold: float | None = None,
                       params: OccupancyParams = OccupancyParams()) -> OccupancyEstimate:
    if detection_threshold is None:
        detection_threshold = noise_threshold(frame, params)
    if not detection_threshold > 0:
        raise ValueError("detection_threshold must be positive")
    P = frame.power.astype(np.float64)
    n_phi, n_b = P.shape
    idx = np.arange(n_b)[None, :]
    above = P > detection_threshold
    has_det = above.any(axis=1)
    first = np.where(has_det, np.argmax(above, axis=1), n_b)[:, None]
    gap = ~above & (idx >= first)
    run_end = np.where(gap.any(axis=1), np.argmax(gap, axis=1), n_b)[:, None]
    in_run = (idx >= first) & (idx < run_end)
    excess = np.where(in_run, P - detection_threshold, 0.0)
    peak = excess.max(axis=1, keepdims=True)
    scale = np.divide(excess, peak, out=np.zeros_like(excess), where=peak > 0)

    prob = np.full((n_phi, n_b), 0.5)
    prob[idx < first] = params.p_free
    prob = np.where(in_run, 0.5 + (params.p_occ - 0.5) * scale, prob)
    prob = np.clip(prob, params.p_min, params.p_max)
    return OccupancyEstimate(prob, float(detection_threshold))


def _logit(p):
    return np.log(p) - np.log1p(-p)


@dataclass
class GridMap:
    log_odds: np.ndarray
    grid: BevGrid

    @property
    def resolution(self) -> float:
        return self.grid.resolution

    def posterior(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.log_odds))


def frame_log_odds(frame: RadarFrame, cfg: RadarConfig, grid: BevGrid,
                   params: OccupancyParams = OccupancyParams(), estimate: OccupancyEstimate | None = None):
    """Single-frame log-odds increment on ``grid``.

    Several range/azimuth cells can land in one BEV cell; an occupied reading
    wins, otherwise the most confident free reading is used.
    """
    est = estimate if estimate is not None else estimate_occupancy(frame, None, params)
    prob = est.probabilities
    r = cfg.bin_ranges()
    R = frame.pose[:3, :3]
    heading = np.stack([np.cos(frame.azimuths), np.sin(frame.azimuths), np.zeros_like(frame.azimuths)], axis=1) @ R.T
    xy = frame.pose[:2, 3] + heading[:, None, :2] * r[None, :, None]
    ij, inside = grid.cell_index(xy)
    flat = np.ravel_multi_index((ij[inside][:, 0], ij[inside][:, 1]), grid.shape)
    vals = prob[inside]
    hi = np.full(grid.shape[0] * grid.shape[1], -np.inf)
    lo = np.full_like(hi, np.inf)
    np.maximum.at(hi, flat, vals)
    np.minimum.at(lo, flat, vals)
    touched = np.isfinite(hi)
    cell_p = np.where(hi > 0.5, hi, lo)
    inc = np.zeros_like(hi)
    inc[touched] = _logit(cell_p[touched])
    return inc.reshape(grid.shape)


def grid_map_accumulate(frames: Sequence[RadarFrame], resolution: float, cfg: RadarConfig,
                        bounds=None, params: OccupancyParams = OccupancyParams()) -> GridMap:
    """Fuse frames into one BEV log-odds map by additive inverse-sensor updates.

    ``bounds`` ((x0, y0, ...), (x1, y1, ...)) anchors the raster; by default it
    covers every frame's full range disk.
    """
    frames = list(frames)
    if not frames:
        raise EmptySequence("need at least one frame")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if bounds is None:
        origins = np.array([f.pose[:2, 3] for f in frames])
        lo = origins.min(axis=0) - cfg.max_range
        hi = origins.max(axis=0) + cfg.max_range
    else:
        lo, hi = bounds
    grid = BevGrid.covering(lo, hi, resolution)
    total = np.zeros(grid.shape)
    for f in frames:
        total += frame_log_odds(f, cfg, grid, params)
    c = params.log_odds_clamp
    return GridMap(np.clip(total, -c, c), grid)


def grid_map_to_points(gmap: GridMap, threshold: float = 0.5) -> np.ndarray:
    """Centres (K, 2) of cells whose posterior exceeds ``threshold``."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    return gmap.grid.centers()[gmap.posterior() > threshold]
