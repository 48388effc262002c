"""Analytic synthetic scenes and a brute-force FMCW frame simulator.

The simulator is the data generator and the ground-truth oracle: it casts
rays through every beam cone, finds each ray's first primitive hit, turns
the hit into a per-bin cross-section sigma = alpha * rho * gamma, merges
rays with the radiation-pattern weights and applies the radar equation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateConfig, OutOfBounds
from .geometry import BevGrid, pose_matrix, sensor_directions
from .radar import RadarConfig, RadarFrame
from .sampling import draw_offsets, normalized_weights

SHAPES = ("box", "cylinder", "ground")


@dataclass(frozen=True)
class ScenePrimitive:
    """Axis-aligned box, vertical cylinder or ground slab.

    ``center`` is the volumetric centre; ``extent`` the full size per axis
    (for cylinders extent[0] is the diameter and extent[0] == extent[1]).
    """

    shape: str
    center: tuple
    extent: tuple
    reflectivity: float = 1.0
    directivity_exponent: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown primitive shape {self.shape!r}")
        c = tuple(float(v) for v in self.center)
        e = tuple(float(v) for v in self.extent)
        if len(c) != 3 or len(e) != 3:
            raise ConfigError("center and extent need three components")
        if min(e) <= 0:
            raise ConfigError("extent components must be positive")
        if not 0 < self.reflectivity <= 1:
            raise ConfigError("reflectivity must lie in (0, 1]")
        if self.directivity_exponent < 0:
            raise ConfigError("directivity_exponent must be >= 0")
        if self.shape == "cylinder" and not math.isclose(e[0], e[1]):
            raise ConfigError("cylinder extent must be circular in x/y")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "extent", e)

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.center) - 0.5 * np.asarray(self.extent)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.center) + 0.5 * np.asarray(self.extent)

    def packed(self):
        """(kind, params) for the ray kernels."""
        if self.shape == "cylinder":
            lo, hi = self.lo, self.hi
            return kernels.KIND_CYLINDER, [self.center[0], self.center[1], 0.5 * self.extent[0], lo[2], hi[2], 0.0]
        return kernels.KIND_BOX, [*self.lo, *self.hi]

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        lo, hi = self.lo, self.hi
        inz = (x[..., 2] >= lo[2]) & (x[..., 2] <= hi[2])
        if self.shape == "cylinder":
            r = 0.5 * self.extent[0]
            dx = x[..., 0] - self.center[0]
            dy = x[..., 1] - self.center[1]
            return inz & (dx * dx + dy * dy <= r * r)
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def to_dict(self) -> dict[str, Any]:
        return {"shape": self.shape, "center": list(self.center), "extent": list(self.extent),
                "reflectivity": self.reflectivity, "directivity_exponent": self.directivity_exponent}

    @classmethod
    def from_dict(cls, d) -> "ScenePrimitive":
        return cls(d["shape"], tuple(d["center"]), tuple(d["extent"]),
                   d.get("reflectivity", 1.0), d.get("directivity_exponent", 0.0))


@dataclass
class SyntheticScene:
    primitives: list
    bounds: tuple
    noise_floor: float = 0.0
    jitter: float = 0.0  # half-width of the optional uniform multiplicative noise

    def __post_init__(self):
        lo, hi = np.asarray(self.bounds[0], float), np.asarray(self.bounds[1], float)
        if lo.shape != (3,) or np.any(hi <= lo):
            raise ConfigError("bounds must be ((x0,y0,z0),(x1,y1,z1)) with positive extent")
        self.bounds = (tuple(lo), tuple(hi))
        if self.noise_floor < 0:
            raise ConfigError("noise_floor must be >= 0")
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must lie in [0, 1)")
        eps = 1e-9
        for p in self.primitives:
            if np.any(p.lo < lo - eps) or np.any(p.hi > hi + eps):
                raise ConfigError(f"primitive {p} leaves the scene bounds")

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.all((x >= self.bounds[0]) & (x <= self.bounds[1]), axis=-1)

    def packed(self):
        if not self.primitives:
            return np.zeros(0, dtype=np.int64), np.zeros((0, 6))
        kinds, params = zip(*(p.packed() for p in self.primitives))
        return np.asarray(kinds, dtype=np.int64), np.asarray(params, dtype=float)

    def to_dict(self) -> dict[str, Any]:
        return {"bounds": [list(self.bounds[0]), list(self.bounds[1])],
                "noise_floor": self.noise_floor, "jitter": self.jitter,
                "primitives": [p.to_dict() for p in self.primitives]}

    @classmethod
    def from_dict(cls, d) -> "SyntheticScene":
        return cls([ScenePrimitive.from_dict(p) for p in d.get("primitives", [])],
                   (tuple(d["bounds"][0]), tuple(d["bounds"][1])),
                   d.get("noise_floor", 0.0), d.get("jitter", 0.0))


@dataclass
class Trajectory:
    positions: np.ndarray
    yaws: np.ndarray
    timestamps: np.ndarray = field(default=None)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, float))
        self.yaws = np.asarray(self.yaws, float).reshape(-1)
        n = self.positions.shape[0]
        if self.timestamps is None:
            self.timestamps = np.arange(n, dtype=float)
        self.timestamps = np.asarray(self.timestamps, float).reshape(-1)
        if n < 2:
            raise ConfigError("a trajectory needs at least two poses")
        if self.yaws.shape != (n,) or self.timestamps.shape != (n,) or self.positions.shape[1] != 3:
            raise ConfigError("positions, yaws and timestamps must have matching lengths")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ConfigError("timestamps must be strictly increasing")

    def __len__(self):
        return self.positions.shape[0]

    def poses(self) -> list:
        return [pose_matrix(p, y) for p, y in zip(self.positions, self.yaws)]

    def check_inside(self, scene: SyntheticScene) -> None:
        if not np.all(scene.contains(self.positions)):
            raise OutOfBounds("trajectory leaves the scene bounds")

    def to_dict(self):
        return {"positions": self.positions.tolist(), "yaws": self.yaws.tolist(),
                "timestamps": self.timestamps.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Trajectory":
        return cls(d["positions"], d["yaws"], d.get("timestamps"))


def query_occupancy(scene: SyntheticScene, x):
    """1 where ``x`` lies inside (or on the surface of) any primitive, else 0."""
    x = np.asarray(x, float)
    if not np.all(scene.contains(x)):
        raise OutOfBounds("query point outside scene bounds")
    occ = np.zeros(x.shape[:-1], dtype=bool)
    for p in scene.primitives:
        occ |= p.contains(x)
    occ = occ.astype(np.int64)
    return int(occ) if occ.ndim == 0 else occ


def simulate_sigma(scene: SyntheticScene, pose, cfg: RadarConfig, supersamples: int, rng) -> np.ndarray:
    """Per-bin aggregated cross-section (N_phi, N_b) before the radar equation."""
    if supersamples < 1:
        raise DegenerateConfig("supersamples must be >= 1")
    pose = np.asarray(pose, float)
    n_az, n_b = cfg.n_azimuth, cfg.n_bins
    a, e = draw_offsets(n_az, cfg, supersamples, rng)
    az = cfg.beam_azimuths()[:, None] + a
    dirs = sensor_directions(az, e) @ pose[:3, :3].T               # (N_phi, S, 3)
    w = normalized_weights(a, e, cfg)                               # (N_phi, S)
    sigma = np.zeros((n_az, n_b))
    kinds, params = scene.packed()
    if kinds.size == 0:
        return sigma
    flat_dirs = np.ascontiguousarray(dirs.reshape(-1, 3))
    origins = np.ascontiguousarray(np.broadcast_to(pose[:3, 3], flat_dirs.shape))
    dr = cfg.range_resolution
    t, prim, normal = kernels.first_hit(origins, flat_dirs, kinds, params, (n_b - 0.5) * dr)
    b = np.rint(np.where(np.isfinite(t), t, 0.0) / dr).astype(np.int64)
    hit = (prim >= 0) & (b >= 1) & (b < n_b)
    refl = np.array([p.reflectivity for p in scene.primitives])
    expo = np.array([p.directivity_exponent for p in scene.primitives])
    cos_inc = np.clip(-np.einsum("ij,ij->i", flat_dirs, normal), 0.0, 1.0)
    pi = np.where(hit, prim, 0)
    gamma = np.where(expo[pi] > 0, cos_inc ** expo[pi], 1.0)
    contrib = np.where(hit, w.reshape(-1) * refl[pi] * gamma, 0.0)
    beam = np.repeat(np.arange(n_az), supersamples)
    np.add.at(sigma, (beam[hit], b[hit]), contrib[hit])
    return sigma


def simulate_frame(scene: SyntheticScene, pose, cfg: RadarConfig, supersamples: int = 64,
                   rng_seed: int = 0, jitter: float | None = None) -> RadarFrame:
    """Render one raw frame; deterministic for a fixed ``rng_seed``.

    Bin 0 (zero range) carries only the noise floor.
    """
    pose = np.asarray(pose, float)
    if not scene.contains(pose[:3, 3]):
        raise OutOfBounds("sensor pose outside scene bounds")
    rng = np.random.default_rng(rng_seed)
    sigma = simulate_sigma(scene, pose, cfg, supersamples, rng)
    r = cfg.bin_ranges()
    power = np.zeros_like(sigma)
    power[:, 1:] = cfg.power_constant * sigma[:, 1:] / r[1:] ** 4
    power += scene.noise_floor
    j = scene.jitter if jitter is None else jitter
    if j > 0:
        power *= rng.uniform(1.0 - j, 1.0 + j, size=power.shape)
    return RadarFrame(pose, cfg.beam_azimuths(), power.astype(np.float32))


def simulate_sequence(scene: SyntheticScene, trajectory: Trajectory, cfg: RadarConfig,
                      supersamples: int = 64, seed: int = 0) -> list:
    """Frames along a trajectory; frame i uses an independent stream derived from (seed, i)."""
    trajectory.check_inside(scene)
    seeds = np.random.SeedSequence(seed).spawn(len(trajectory))
    return [simulate_frame(scene, T, cfg, supersamples, np.random.default_rng(s))
            for T, s in zip(trajectory.poses(), seeds)]


def _boundary_cells(p: ScenePrimitive, grid: BevGrid, band) -> np.ndarray:
    z0, z1 = band
    lo, hi = p.lo, p.hi
    xs, ys = grid.edges()
    cx0, cy0 = np.meshgrid(xs[:-1], ys[:-1], indexing="ij")
    cx1, cy1 = np.meshgrid(xs[1:], ys[1:], indexing="ij")
    z_touch = (lo[2] <= z1) & (hi[2] >= z0)
    z_inner = (lo[2] < z0) & (z1 < hi[2])
    if not z_touch:
        return np.zeros(grid.shape, dtype=bool)
    if p.shape == "cylinder":
        cx, cy, r = p.center[0], p.center[1], 0.5 * p.extent[0]
        nx = np.clip(cx, cx0, cx1) - cx
        ny = np.clip(cy, cy0, cy1) - cy
        touch = nx * nx + ny * ny <= r * r
        fx = np.maximum(np.abs(cx0 - cx), np.abs(cx1 - cx))
        fy = np.maximum(np.abs(cy0 - cy), np.abs(cy1 - cy))
        inner = (fx * fx + fy * fy < r * r) & z_inner
        return touch & ~inner
    touch = (lo[0] < cx1) & (hi[0] >= cx0) & (lo[1] < cy1) & (hi[1] >= cy0)
    inner = (lo[0] < cx0) & (cx1 <= hi[0]) & (lo[1] < cy0) & (cy1 <= hi[1]) & z_inner
    return touch & ~inner


def ground_truth_bev(scene: SyntheticScene, grid_resolution: float, height_band, grid: BevGrid | None = None):
    """Centres (K, 2) of BEV cells whose vertical column within ``height_band`` meets a primitive surface.

    The raster is anchored at the scene's lower xy corner unless ``grid`` is given.
    """
    if not grid_resolution > 0:
        raise ValueError("grid_resolution must be positive")
    if grid is None:
        grid = BevGrid.covering(scene.bounds[0], scene.bounds[1], grid_resolution)
    mask = np.zeros(grid.shape, dtype=bool)
    for p in scene.primitives:
        mask |= _boundary_cells(p, grid, height_band)
    return grid.centers()[mask]


def make_line_trajectory(start, end, n: int, height: float, yaw: float | None = None) -> Trajectory:
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    s = np.linspace(0.0, 1.0, n)[:, None]
    xy = start[None, :2] + s * (end - start)[None, :2]
    pos = np.column_stack([xy, np.full(n, height)])
    if yaw is None:
        yaw = math.atan2(end[1] - start[1], end[0] - start[0])
    return Trajectory(pos, np.full(n, yaw), np.arange(n) * 0.25)


def make_loop_trajectory(center, radius: float, n: int, height: float, phase: float = 0.0) -> Trajectory:
    """``n`` poses evenly spaced on a circle, heading along the tangent (counter-clockwise)."""
    if not radius > 0:
        raise ConfigError("radius must be positive")
    t = phase + np.arange(n) * (2.0 * math.pi / n)
    cx, cy = float(center[0]), float(center[1])
    pos = np.column_stack([cx + radius * np.cos(t), cy + radius * np.sin(t), np.full(n, height)])
    yaws = np.mod(t + 0.5 * math.pi + math.pi, 2.0 * math.pi) - math.pi
    return Trajectory(pos, yaws, np.arange(n) * 0.25)
