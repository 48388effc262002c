"""Metrics, occupancy extraction and novel-view synthesis."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptySet, MemoryBudgetExceeded, OutOfBounds, ShapeMismatch
from .fields import FieldModel
from .geometry import BevGrid
from .radar import RadarConfig, RadarFrame
from .training import forward_batch, make_batch, predictable_bins

PSNR_IDENTICAL = math.inf
MAX_VOXELS = 50_000_000


@dataclass
class MetricReport:
    cd: float
    rcd: float
    rmse: float
    psnr: float
    per_frame: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def synthesize_frame(model: FieldModel, pose, cfg: RadarConfig, S: int = 64, seed: int = 0,
                     active=None, joint_sigma: bool = False, chunk_beams: int = 8,
                     min_bin: int = 1) -> RadarFrame:
    """Predicted raw frame for every beam and range bin at ``pose``.

    Bins below ``min_bin`` (the unsupervised blind zone) are left at zero.
    """
    pose = np.asarray(pose, float)
    if not model.cfg.hash.contains(pose[:3, 3]):
        raise OutOfBounds("pose outside the field bounds")
    rng = np.random.default_rng(seed)
    az = cfg.beam_azimuths()
    bins = predictable_bins(cfg, min_bin)
    power = np.zeros((cfg.n_azimuth, cfg.n_bins))
    batch = make_batch(np.broadcast_to(pose, (az.shape[0], 4, 4)), az, cfg, S, rng, bins)
    for start in range(0, az.shape[0], chunk_beams):
        sl = slice(start, start + chunk_beams)
        sub = type(batch)(batch.poses[sl], batch.azimuths[sl], batch.a[sl], batch.e[sl], bins)
        power[sl, min_bin:] = forward_batch(model, sub, cfg, active, joint_sigma).power
    return RadarFrame(pose, az, power.astype(np.float32))


def _alpha_at(model: FieldModel, pts, active=None, chunk=200_000):
    pts = np.asarray(pts, float).reshape(-1, 3)
    out = np.zeros(pts.shape[0])
    inside = model.cfg.hash.contains(pts)
    idx = np.flatnonzero(inside)
    up = np.tile([0.0, 0.0, 1.0], (min(chunk, max(idx.size, 1)), 1))
    for s in range(0, idx.size, chunk):
        sel = idx[s:s + chunk]
        a, _, _, _ = model.forward(pts[sel], up[:sel.size], active, check=False)
        out[sel] = a
    return out


def bev_alpha(model: FieldModel, grid: BevGrid, height_band, n_heights: int = 3, active=None) -> np.ndarray:
    """Max occupancy over ``n_heights`` evenly spread heights inside the band, per BEV cell."""
    z0, z1 = height_band
    zs = z0 + (np.arange(n_heights) + 0.5) * (z1 - z0) / n_heights
    c = grid.centers()
    best = np.zeros(grid.shape)
    for z in zs:
        pts = np.concatenate([c, np.full(c.shape[:-1] + (1,), z)], axis=-1)
        best = np.maximum(best, _alpha_at(model, pts, active).reshape(grid.shape))
    return best


def extract_bev(model: FieldModel, grid_resolution: float, height_band, threshold: float = 0.5,
                bounds=None, n_heights: int = 3, active=None) -> np.ndarray:
    """Centres (K, 2) of BEV cells with occupancy > ``threshold`` somewhere in the height band.

    ``bounds`` restricts the raster (default: the field bounds); cells are
    anchored at the lower xy corner of whichever bounds are used.
    """
    if not grid_resolution > 0:
        raise ValueError("grid_resolution must be positive")
    lo, hi = bounds if bounds is not None else model.cfg.hash.bounds
    grid = BevGrid.covering(lo, hi, grid_resolution)
    alpha = bev_alpha(model, grid, height_band, n_heights, active)
    return grid.centers()[alpha > threshold]


def observed_mask(points, sensor_xy, max_range: float, min_range: float = 0.0) -> np.ndarray:
    """True for points with some sensor at horizontal distance in [min_range, max_range].

    Used to restrict BEV comparisons to cells a training beam actually
    supervised; elsewhere the field is unconstrained.
    """
    p = np.asarray(points, float).reshape(-1, 2)
    s = np.asarray(sensor_xy, float).reshape(-1, 2)
    if s.shape[0] == 0:
        return np.zeros(p.shape[0], bool)
    d = np.linalg.norm(p[:, None, :] - s[None, :, :], axis=-1)
    return np.any((d >= min_range) & (d <= max_range), axis=1)


def extract_voxels(model: FieldModel, resolution: float, active=None, bounds=None):
    """Dense occupancy samples at voxel centres over the field bounds.

    Returns (grid (nx, ny, nz), origin of voxel (0,0,0) corner).
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    lo, hi = bounds if bounds is not None else model.cfg.hash.bounds
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    n = np.maximum(np.floor((hi - lo) / resolution + 1e-9).astype(int), 1)
    if int(np.prod(n)) > MAX_VOXELS:
        raise MemoryBudgetExceeded(f"{tuple(n)} voxels exceeds budget {MAX_VOXELS}")
    axes = [lo[i] + (np.arange(n[i]) + 0.5) * resolution for i in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1)
    return _alpha_at(model, pts, active).reshape(tuple(n)), lo


def chamfer(pred, gt, origin=(0.0, 0.0), return_parts: bool = False):
    """Symmetric mean nearest-neighbour distance and its range-normalised variant.

    RCD divides each NN distance by the distance of the ground-truth point
    involved (the query point for gt->pred, the found neighbour for
    pred->gt) from ``origin``.
    """
    p = np.asarray(pred, float)
    g = np.asarray(gt, float)
    if p.size == 0 or g.size == 0:
        raise EmptySet("chamfer needs two non-empty point sets")
    p = p.reshape(p.shape[0], -1)
    g = g.reshape(g.shape[0], -1)
    o = np.asarray(origin, float)[: g.shape[1]]
    d_pg, i_pg = cKDTree(g).query(p)
    d_gp, _ = cKDTree(p).query(g)
    g_rng = np.maximum(np.linalg.norm(g - o, axis=1), 1e-9)
    cd_pg, cd_gp = d_pg.mean(), d_gp.mean()
    rcd_pg = (d_pg / g_rng[i_pg]).mean()
    rcd_gp = (d_gp / g_rng).mean()
    cd = 0.5 * (cd_pg + cd_gp)
    rcd = 0.5 * (rcd_pg + rcd_gp)
    if return_parts:
        return float(cd), float(rcd), {"pred_to_gt": float(cd_pg), "gt_to_pred": float(cd_gp),
                                       "rcd_pred_to_gt": float(rcd_pg), "rcd_gt_to_pred": float(rcd_gp)}
    return float(cd), float(rcd)


def frame_metrics(pred: RadarFrame | np.ndarray, gt: RadarFrame | np.ndarray):
    """(rmse, psnr dB) with the ground-truth frame maximum as peak; psnr=inf when identical."""
    p = np.asarray(pred.power if isinstance(pred, RadarFrame) else pred, dtype=np.float64)
    g = np.asarray(gt.power if isinstance(gt, RadarFrame) else gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ShapeMismatch(f"{p.shape} vs {g.shape}")
    rmse = float(np.sqrt(np.mean((p - g) ** 2)))
    if rmse == 0.0:
        return 0.0, PSNR_IDENTICAL
    return rmse, float(20.0 * np.log10(g.max() / rmse))


def nearest_frame_baseline(train_frames: Sequence[RadarFrame], pose) -> RadarFrame:
    """Training frame whose sensor position is closest to ``pose``."""
    pos = np.asarray(pose, float)[:3, 3]
    d = [np.linalg.norm(f.pose[:3, 3] - pos) for f in train_frames]
    return train_frames[int(np.argmin(d))]
