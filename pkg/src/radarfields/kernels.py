"""Hot numeric kernels, each in two flavours.

``*_nb`` functions are numba-compiled loops, ``*_np`` functions are vectorized
numpy. The public names at the bottom dispatch on ``_accel.USE_NUMBA``. Both
flavours must agree to floating-point round-off; tests/test_kernels.py checks.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, optional_njit

PRIME_Y = np.uint64(2654435761)
PRIME_Z = np.uint64(805459861)

KIND_BOX = 0
KIND_CYLINDER = 1

# --------------------------------------------------------------------------
# multiresolution hash grid
# --------------------------------------------------------------------------
#
# Layout arrays shared by both flavours (built by encodings.HashGridConfig):
#   lo      (3,)   lower corner of the bounds
#   scale   (L,)   cells per metre at each level (isotropic)
#   ncell   (L,3)  cell counts per axis
#   dense   (L,)   1 when the level's vertices are stored without hashing
#   tables  (L,T,F)


@optional_njit(cache=True)
def _corner_index_nb(ix, iy, iz, vx, vy, is_dense, tsize):
    if is_dense:
        return ix + iy * vx + iz * vx * vy
    h = np.uint64(ix) ^ (np.uint64(iy) * np.uint64(2654435761)) ^ (np.uint64(iz) * np.uint64(805459861))
    return np.int64(h & np.uint64(tsize - 1))


@optional_njit(cache=True)
def hash_forward_nb(points, lo, scale, ncell, dense, tables, active):
    m_pts = points.shape[0]
    n_lev, tsize, n_feat = tables.shape
    out = np.zeros((m_pts, n_lev * n_feat), dtype=tables.dtype)
    for m in range(m_pts):
        for lev in range(active):
            s = scale[lev]
            ux = (points[m, 0] - lo[0]) * s
            uy = (points[m, 1] - lo[1]) * s
            uz = (points[m, 2] - lo[2]) * s
            cx = min(max(int(math.floor(ux)), 0), ncell[lev, 0] - 1)
            cy = min(max(int(math.floor(uy)), 0), ncell[lev, 1] - 1)
            cz = min(max(int(math.floor(uz)), 0), ncell[lev, 2] - 1)
            fx = ux - cx
            fy = uy - cy
            fz = uz - cz
            vx = ncell[lev, 0] + 1
            vy = ncell[lev, 1] + 1
            for corner in range(8):
                bx = corner & 1
                by = (corner >> 1) & 1
                bz = (corner >> 2) & 1
                w = (fx if bx else 1.0 - fx) * (fy if by else 1.0 - fy) * (fz if bz else 1.0 - fz)
                idx = _corner_index_nb(cx + bx, cy + by, cz + bz, vx, vy, dense[lev], tsize)
                for f in range(n_feat):
                    out[m, lev * n_feat + f] += w * tables[lev, idx, f]
    return out


@optional_njit(cache=True)
def hash_backward_nb(points, lo, scale, ncell, dense, upstream, active, grad):
    """Accumulate upstream * interpolation weight into ``grad`` (L,T,F) in place."""
    m_pts = points.shape[0]
    n_lev, tsize, n_feat = grad.shape
    for m in range(m_pts):
        for lev in range(active):
            s = scale[lev]
            ux = (points[m, 0] - lo[0]) * s
            uy = (points[m, 1] - lo[1]) * s
            uz = (points[m, 2] - lo[2]) * s
            cx = min(max(int(math.floor(ux)), 0), ncell[lev, 0] - 1)
            cy = min(max(int(math.floor(uy)), 0), ncell[lev, 1] - 1)
            cz = min(max(int(math.floor(uz)), 0), ncell[lev, 2] - 1)
            fx = ux - cx
            fy = uy - cy
            fz = uz - cz
            vx = ncell[lev, 0] + 1
            vy = ncell[lev, 1] + 1
            for corner in range(8):
                bx = corner & 1
                by = (corner >> 1) & 1
                bz = (corner >> 2) & 1
                w = (fx if bx else 1.0 - fx) * (fy if by else 1.0 - fy) * (fz if bz else 1.0 - fz)
                idx = _corner_index_nb(cx + bx, cy + by, cz + bz, vx, vy, dense[lev], tsize)
                for f in range(n_feat):
                    grad[lev, idx, f] += w * upstream[m, lev * n_feat + f]
    return grad


def _level_corners_np(points, lo, s, ncell_l, is_dense, tsize):
    """Corner table indices (M,8) and trilinear weights (M,8) for one level."""
    u = (points - lo) * s
    cell = np.clip(np.floor(u).astype(np.int64), 0, ncell_l - 1)
    frac = u - cell
    vx, vy = ncell_l[0] + 1, ncell_l[1] + 1
    idx = np.empty((points.shape[0], 8), dtype=np.int64)
    wts = np.empty((points.shape[0], 8), dtype=points.dtype)
    for corner in range(8):
        b = np.array([corner & 1, (corner >> 1) & 1, (corner >> 2) & 1])
        c = cell + b
        w = np.where(b, frac, 1.0 - frac)
        wts[:, corner] = w[:, 0] * w[:, 1] * w[:, 2]
        if is_dense:
            idx[:, corner] = c[:, 0] + c[:, 1] * vx + c[:, 2] * vx * vy
        else:
            cu = c.astype(np.uint64)
            h = cu[:, 0] ^ (cu[:, 1] * PRIME_Y) ^ (cu[:, 2] * PRIME_Z)
            idx[:, corner] = (h & np.uint64(tsize - 1)).astype(np.int64)
    return idx, wts


def hash_forward_np(points, lo, scale, ncell, dense, tables, active):
    n_lev, tsize, n_feat = tables.shape
    out = np.zeros((points.shape[0], n_lev * n_feat), dtype=tables.dtype)
    for lev in range(active):
        idx, wts = _level_corners_np(points, lo, scale[lev], ncell[lev], dense[lev], tsize)
        out[:, lev * n_feat:(lev + 1) * n_feat] = np.einsum("mc,mcf->mf", wts, tables[lev][idx])
    return out


def hash_backward_np(points, lo, scale, ncell, dense, upstream, active, grad):
    n_lev, tsize, n_feat = grad.shape
    for lev in range(active):
        idx, wts = _level_corners_np(points, lo, scale[lev], ncell[lev], dense[lev], tsize)
        flat = idx.ravel()
        for f in range(n_feat):
            contrib = wts * upstream[:, lev * n_feat + f][:, None]
            grad[lev, :, f] += np.bincount(flat, weights=contrib.ravel(), minlength=tsize)
    return grad


# --------------------------------------------------------------------------
# ray / primitive first hit
# --------------------------------------------------------------------------
#
# Primitives are packed as kinds (P,) and params (P,6):
#   box:      xmin ymin zmin xmax ymax zmax
#   cylinder: cx cy radius zmin zmax 0


@optional_njit(cache=True)
def first_hit_nb(origins, dirs, kinds, params, t_max):
    """Nearest positive intersection per ray.

    Returns (t, prim, normal); rays with no hit get t=inf, prim=-1.
    Rays starting inside a primitive ignore that primitive.
    """
    n = origins.shape[0]
    t_out = np.full(n, np.inf)
    p_out = np.full(n, -1, dtype=np.int64)
    n_out = np.zeros((n, 3))
    for r in range(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]
        best = t_max
        for p in range(kinds.shape[0]):
            if kinds[p] == 0:
                t0 = -np.inf
                t1 = np.inf
                ax = -1
                sgn = 0.0
                ok = True
                for a in range(3):
                    o = origins[r, a]
                    d = dirs[r, a]
                    lo = params[p, a]
                    hi = params[p, a + 3]
                    if d == 0.0:
                        if o < lo or o > hi:
                            ok = False
                            break
                        continue
                    ta = (lo - o) / d
                    tb = (hi - o) / d
                    s = -1.0
                    if ta > tb:
                        ta, tb = tb, ta
                        s = 1.0
                    if ta > t0:
                        t0 = ta
                        ax = a
                        sgn = s
                    if tb < t1:
                        t1 = tb
                if not ok or t0 > t1 or t0 <= 0.0 or ax < 0:
                    continue
                if t0 < best:
                    best = t0
                    t_out[r] = t0
                    p_out[r] = p
                    n_out[r, 0] = 0.0
                    n_out[r, 1] = 0.0
                    n_out[r, 2] = 0.0
                    n_out[r, ax] = sgn
            else:
                cx, cy, rad, z0, z1 = params[p, 0], params[p, 1], params[p, 2], params[p, 3], params[p, 4]
                # lateral surface
                qa = dx * dx + dy * dy
                ex = ox - cx
                ey = oy - cy
                if qa > 0.0:
                    qb = ex * dx + ey * dy
                    qc = ex * ex + ey * ey - rad * rad
                    disc = qb * qb - qa * qc
                    if disc >= 0.0 and qc > 0.0:
                        t = (-qb - math.sqrt(disc)) / qa
                        if t > 0.0 and t < best:
                            z = oz + t * dz
                            if z0 <= z <= z1:
                                best = t
                                t_out[r] = t
                                p_out[r] = p
                                nx = (ex + t * dx) / rad
                                ny = (ey + t * dy) / rad
                                n_out[r, 0] = nx
                                n_out[r, 1] = ny
                                n_out[r, 2] = 0.0
                # caps
                if dz != 0.0:
                    for cap in range(2):
                        zc = z0 if cap == 0 else z1
                        t = (zc - oz) / dz
                        if t > 0.0 and t < best:
                            hx = ex + t * dx
                            hy = ey + t * dy
                            if hx * hx + hy * hy <= rad * rad:
                                best = t
                                t_out[r] = t
                                p_out[r] = p
                                n_out[r, 0] = 0.0
                                n_out[r, 1] = 0.0
                                n_out[r, 2] = -1.0 if cap == 0 else 1.0
    return t_out, p_out, n_out


def _box_hit_np(o, d, prm):
    lo, hi = prm[:3], prm[3:6]
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (lo - o) / d
        tb = (hi - o) / d
    parallel = d == 0.0
    outside = parallel & ((o < lo) | (o > hi))
    ta = np.where(parallel, -np.inf, ta)
    tb = np.where(parallel, np.inf, tb)
    tmin = np.minimum(ta, tb)
    tmax = np.maximum(ta, tb)
    ax = np.argmax(tmin, axis=1)
    rows = np.arange(o.shape[0])
    t0 = tmin[rows, ax]
    t1 = np.min(tmax, axis=1)
    valid = (~outside.any(axis=1)) & (t0 <= t1) & (t0 > 0.0) & np.isfinite(t0)
    normal = np.zeros_like(o)
    # entering through the lower face of an axis means the outward normal points to -axis
    entered_low = ta[rows, ax] <= tb[rows, ax]
    normal[rows, ax] = np.where(entered_low, -1.0, 1.0)
    return np.where(valid, t0, np.inf), normal


def _cylinder_hit_np(o, d, prm):
    cx, cy, rad, z0, z1 = prm[:5]
    ex, ey = o[:, 0] - cx, o[:, 1] - cy
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    qa = dx * dx + dy * dy
    qb = ex * dx + ey * dy
    qc = ex * ex + ey * ey - rad * rad
    disc = qb * qb - qa * qc
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = (-qb - np.sqrt(np.maximum(disc, 0.0))) / qa
    z = o[:, 2] + t_side * dz
    side_ok = (qa > 0) & (disc >= 0) & (qc > 0) & (t_side > 0) & (z >= z0) & (z <= z1)
    t_best = np.where(side_ok, t_side, np.inf)
    normal = np.zeros_like(o)
    with np.errstate(invalid="ignore"):
        normal[:, 0] = np.where(side_ok, (ex + t_side * dx) / rad, 0.0)
        normal[:, 1] = np.where(side_ok, (ey + t_side * dy) / rad, 0.0)
    for zc, nz in ((z0, -1.0), (z1, 1.0)):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (zc - o[:, 2]) / dz
            hx, hy = ex + t * dx, ey + t * dy
        ok = (dz != 0) & (t > 0) & (hx * hx + hy * hy <= rad * rad) & (t < t_best)
        t_best = np.where(ok, t, t_best)
        normal[ok] = (0.0, 0.0, nz)
    return t_best, normal


def first_hit_np(origins, dirs, kinds, params, t_max):
    n = origins.shape[0]
    t_out = np.full(n, np.inf)
    p_out = np.full(n, -1, dtype=np.int64)
    n_out = np.zeros((n, 3))
    best = np.full(n, float(t_max))
    for p in range(kinds.shape[0]):
        if kinds[p] == KIND_BOX:
            t, nrm = _box_hit_np(origins, dirs, params[p])
        else:
            t, nrm = _cylinder_hit_np(origins, dirs, params[p])
        closer = t < best
        best = np.where(closer, t, best)
        t_out[closer] = t[closer]
        p_out[closer] = p
        n_out[closer] = nrm[closer]
    return t_out, p_out, n_out


# --------------------------------------------------------------------------
# fused Adam update
# --------------------------------------------------------------------------


@optional_njit(cache=True)
def adam_update_nb(p, g, m, v, lr_t, beta1, beta2, eps, inv_bc2):
    """In-place Adam on flat arrays; lr_t already carries the first-moment bias correction."""
    for i in range(p.shape[0]):
        gi = g[i]
        mi = beta1 * m[i] + (1.0 - beta1) * gi
        vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr_t * mi / (math.sqrt(vi * inv_bc2) + eps)


def adam_update_np(p, g, m, v, lr_t, beta1, beta2, eps, inv_bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr_t * m / (np.sqrt(v * inv_bc2) + eps)


if USE_NUMBA:
    adam_update = adam_update_nb
    hash_forward = hash_forward_nb
    hash_backward = hash_backward_nb
    first_hit = first_hit_nb
else:
    adam_update = adam_update_np
    hash_forward = hash_forward_np
    hash_backward = hash_backward_np
    first_hit = first_hit_np
