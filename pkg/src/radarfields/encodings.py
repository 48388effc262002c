"""Input encodings: multiresolution hash grid, degree-3 real SH, level masking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels
from .errors import ConfigError, NotUnitVector, OutOfBounds

SH_DIM = 16


@dataclass(frozen=True)
class HashGridConfig:
    n_levels: int = 14
    features_per_level: int = 2
    table_size_log2: int = 19
    base_resolution: int = 16
    per_level_scale: float = 1.45
    bounds: tuple = ((-50.0, -50.0, -50.0), (50.0, 50.0, 50.0))

    def __post_init__(self):
        if self.n_levels < 1 or self.features_per_level < 1:
            raise ConfigError("n_levels and features_per_level must be >= 1")
        if not self.per_level_scale > 1:
            raise ConfigError("per_level_scale must exceed 1")
        if self.base_resolution < 1 or self.table_size_log2 < 1:
            raise ConfigError("base_resolution and table_size_log2 must be >= 1")
        lo, hi = np.asarray(self.bounds[0], float), np.asarray(self.bounds[1], float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise ConfigError("bounds must be ((x0,y0,z0), (x1,y1,z1)) with x1>x0 etc.")
        object.__setattr__(self, "bounds", (tuple(map(float, lo)), tuple(map(float, hi))))

    @property
    def table_size(self) -> int:
        return 1 << self.table_size_log2

    @property
    def n_features(self) -> int:
        return self.n_levels * self.features_per_level

    def level_resolution(self, i: int) -> int:
        """Cells along the longest bounds axis at level ``i``."""
        return int(math.floor(self.base_resolution * self.per_level_scale ** i))

    def layout(self):
        """(lo, scale, ncell, dense) arrays consumed by the kernels."""
        lo = np.asarray(self.bounds[0], float)
        extent = np.asarray(self.bounds[1], float) - lo
        longest = float(extent.max())
        scale = np.empty(self.n_levels)
        ncell = np.empty((self.n_levels, 3), dtype=np.int64)
        dense = np.empty(self.n_levels, dtype=np.int64)
        for i in range(self.n_levels):
            res = self.level_resolution(i)
            scale[i] = res / longest
            ncell[i] = np.maximum(np.ceil(extent * scale[i] - 1e-9).astype(np.int64), 1)
            dense[i] = int(np.prod(ncell[i] + 1) <= self.table_size)
        return lo, scale, ncell, dense

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        lo, hi = np.asarray(self.bounds[0]), np.asarray(self.bounds[1])
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_levels": self.n_levels,
            "features_per_level": self.features_per_level,
            "table_size_log2": self.table_size_log2,
            "base_resolution": self.base_resolution,
            "per_level_scale": self.per_level_scale,
            "bounds": [list(self.bounds[0]), list(self.bounds[1])],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "HashGridConfig":
        d = dict(d)
        if "bounds" in d:
            d["bounds"] = (tuple(d["bounds"][0]), tuple(d["bounds"][1]))
        return cls(**d)


@dataclass
class HashGrid:
    """A hash grid config together with its learnable tables (L, T, F)."""

    cfg: HashGridConfig
    tables: np.ndarray
    _layout: tuple = field(init=False, repr=False)

    def __post_init__(self):
        expected = (self.cfg.n_levels, self.cfg.table_size, self.cfg.features_per_level)
        if self.tables.shape != expected:
            raise ConfigError(f"tables shape {self.tables.shape} != {expected}")
        self._layout = self.cfg.layout()

    @classmethod
    def create(cls, cfg: HashGridConfig, rng=None, dtype=np.float64) -> "HashGrid":
        rng = np.random.default_rng(rng)
        shape = (cfg.n_levels, cfg.table_size, cfg.features_per_level)
        return cls(cfg, rng.uniform(-1e-4, 1e-4, size=shape).astype(dtype))

    def encode(self, x, active_levels: int | None = None, check: bool = True) -> np.ndarray:
        return hash_encode(x, self, active_levels, check=check)

    def backward(self, x, upstream, active_levels: int | None = None, grad=None) -> np.ndarray:
        return hash_encode_backward(x, self, active_levels, upstream, grad=grad)


def _prep_points(x, grid: HashGrid, check: bool):
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    if pts.shape[-1] != 3:
        raise ValueError("points must have trailing dimension 3")
    if check and not np.all(grid.cfg.contains(pts)):
        raise OutOfBounds("point outside hash-grid bounds")
    return pts


def _active(grid: HashGrid, active_levels):
    n = grid.cfg.n_levels
    if active_levels is None:
        return n
    if not 0 <= active_levels <= n:
        raise ValueError(f"active_levels must lie in [0, {n}]")
    return int(active_levels)


def hash_encode(x, grid: HashGrid, active_levels: int | None = None, check: bool = True) -> np.ndarray:
    """Concatenated per-level trilinear features, shape (M, L*F).

    Levels at index >= active_levels are zero.
    """
    single = np.asarray(x).ndim == 1
    pts = _prep_points(x, grid, check)
    lo, scale, ncell, dense = grid._layout
    out = kernels.hash_forward(pts, lo, scale, ncell, dense, grid.tables, _active(grid, active_levels))
    return out[0] if single else out


def hash_encode_backward(x, grid: HashGrid, active_levels, upstream, grad=None) -> np.ndarray:
    """Gradient of <upstream, hash_encode(x)> w.r.t. the tables.

    If ``grad`` is given it is accumulated into and returned.
    """
    pts = _prep_points(x, grid, check=True)
    up = np.ascontiguousarray(np.atleast_2d(np.asarray(upstream, dtype=grid.tables.dtype)))
    if up.shape != (pts.shape[0], grid.cfg.n_features):
        raise ValueError(f"upstream shape {up.shape} != {(pts.shape[0], grid.cfg.n_features)}")
    if grad is None:
        grad = np.zeros_like(grid.tables)
    lo, scale, ncell, dense = grid._layout
    kernels.hash_backward(pts, lo, scale, ncell, dense, up, _active(grid, active_levels), grad)
    return grad


# real SH basis constants, degree 0..3
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
       -1.0925484305920792, 0.5462742152960396)
_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
       0.3731763325901154, -0.4570457994644658, 1.445305721320277,
       -0.5900435899266435)


def sh_encode(d, check: bool = True) -> np.ndarray:
    """Real spherical-harmonic basis up to degree 3 for unit directions, (..., 16)."""
    d = np.asarray(d, dtype=np.float64)
    if check and np.any(np.abs(np.linalg.norm(d, axis=-1) - 1.0) > 1e-6):
        raise NotUnitVector("direction must have unit norm")
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    out = np.empty(d.shape[:-1] + (SH_DIM,))
    out[..., 0] = _C0
    out[..., 1] = -_C1 * y
    out[..., 2] = _C1 * z
    out[..., 3] = -_C1 * x
    out[..., 4] = _C2[0] * xy
    out[..., 5] = _C2[1] * yz
    out[..., 6] = _C2[2] * (2.0 * zz - xx - yy)
    out[..., 7] = _C2[3] * xz
    out[..., 8] = _C2[4] * (xx - yy)
    out[..., 9] = _C3[0] * y * (3 * xx - yy)
    out[..., 10] = _C3[1] * xy * z
    out[..., 11] = _C3[2] * y * (4 * zz - xx - yy)
    out[..., 12] = _C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
    out[..., 13] = _C3[4] * x * (4 * zz - xx - yy)
    out[..., 14] = _C3[5] * z * (xx - yy)
    out[..., 15] = _C3[6] * x * (xx - 3 * yy)
    return out


@dataclass(frozen=True)
class CoarseToFineSchedule:
    max_epoch: int
    floor_fraction: float = 0.4
    span_fraction: float = 0.6

    def __post_init__(self):
        if self.max_epoch < 1:
            raise ConfigError("max_epoch must be >= 1")


def active_levels(epoch: int, sched: CoarseToFineSchedule, n_levels: int) -> int:
    """Number of unmasked hash levels at ``epoch``.

    Level i is active while i / n_levels < floor + span * sin(epoch / max_epoch).
    """
    if not 0 <= epoch <= sched.max_epoch:
        raise ValueError(f"epoch {epoch} outside [0, {sched.max_epoch}]")
    threshold = sched.floor_fraction + sched.span_fraction * math.sin(epoch / sched.max_epoch)
    return sum(1 for i in range(n_levels) if i / n_levels < threshold)
