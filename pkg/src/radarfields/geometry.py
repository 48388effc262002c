"""Rigid sensor poses: 4x4 world-from-sensor matrices, x forward, z up."""
from __future__ import annotations

import numpy as np


def pose_matrix(position, yaw: float = 0.0) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    T = np.eye(4)
    T[:3, :3] = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    T[:3, 3] = position
    return T


def is_rigid(T, tol: float = 1e-6) -> bool:
    T = np.asarray(T, float)
    if T.shape != (4, 4) or not np.allclose(T[3], [0, 0, 0, 1], atol=tol):
        return False
    R = T[:3, :3]
    return bool(np.allclose(R.T @ R, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1.0) < tol)


def pose_yaw(T) -> float:
    return float(np.arctan2(T[1, 0], T[0, 0]))


def sensor_directions(azimuth, elevation) -> np.ndarray:
    """Unit vectors in the sensor frame for (azimuth, elevation) arrays; shape (..., 3)."""
    az = np.asarray(azimuth, float)
    el = np.asarray(elevation, float)
    ce = np.cos(el)
    return np.stack(np.broadcast_arrays(ce * np.cos(az), ce * np.sin(az), np.sin(el)), axis=-1)


class BevGrid:
    """Axis-aligned BEV raster; cell (i, j) covers [x0+i*r, x0+(i+1)*r) x [y0+j*r, y0+(j+1)*r)."""

    def __init__(self, origin, resolution: float, shape):
        if not resolution > 0:
            raise ValueError("resolution must be positive")
        self.origin = np.asarray(origin, float)[:2]
        self.resolution = float(resolution)
        self.shape = (int(shape[0]), int(shape[1]))

    @classmethod
    def covering(cls, lo, hi, resolution: float) -> "BevGrid":
        lo = np.asarray(lo, float)[:2]
        hi = np.asarray(hi, float)[:2]
        n = np.maximum(np.ceil((hi - lo) / resolution - 1e-9).astype(int), 1)
        return cls(lo, resolution, n)

    def edges(self):
        r = self.resolution
        xs = self.origin[0] + r * np.arange(self.shape[0] + 1)
        ys = self.origin[1] + r * np.arange(self.shape[1] + 1)
        return xs, ys

    def centers(self) -> np.ndarray:
        """Cell centres, shape (nx, ny, 2)."""
        r = self.resolution
        cx = self.origin[0] + r * (np.arange(self.shape[0]) + 0.5)
        cy = self.origin[1] + r * (np.arange(self.shape[1]) + 0.5)
        X, Y = np.meshgrid(cx, cy, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def cell_index(self, xy):
        """Integer (i, j) for points (..., 2) and a mask of those inside the grid."""
        ij = np.floor((np.asarray(xy, float)[..., :2] - self.origin) / self.resolution).astype(np.int64)
        inside = (ij[..., 0] >= 0) & (ij[..., 0] < self.shape[0]) & (ij[..., 1] >= 0) & (ij[..., 1] < self.shape[1])
        return ij, inside

    def to_dict(self):
        return {"origin": self.origin.tolist(), "resolution": self.resolution, "shape": list(self.shape)}
