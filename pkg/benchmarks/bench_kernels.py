"""Wall-clock comparison of the numba and numpy kernel flavours.

    python3 benchmarks/bench_kernels.py [--points 20000] [--repeat 5]

Both flavours are called directly, so the env switch does not matter here.
The first numba call (JIT compile or cache load) is excluded from timing.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from radarfields import kernels
from radarfields.encodings import HashGridConfig
from radarfields.radar import RadarConfig
from radarfields.sampling import draw_offsets
from radarfields.geometry import sensor_directions


def _cases(n_points: int, seed: int):
    rng = np.random.default_rng(seed)
    hc = HashGridConfig(n_levels=14, table_size_log2=17, bounds=((-20, -20, -0.5), (20, 20, 6)))
    lo, scale, ncell, dense = hc.layout()
    pts = rng.uniform(hc.bounds[0], hc.bounds[1], size=(n_points, 3))
    tables = rng.normal(size=(hc.n_levels, hc.table_size, hc.features_per_level))
    up = rng.normal(size=(n_points, hc.n_features))
    grad = np.zeros_like(tables)

    cfg = RadarConfig(n_bins=96)
    a, e = draw_offsets(cfg.n_azimuth, cfg, 16, rng)
    dirs = np.ascontiguousarray(sensor_directions(cfg.beam_azimuths()[:, None] + a, e).reshape(-1, 3))
    origins = np.tile([0.0, 0.0, 1.0], (dirs.shape[0], 1))
    kinds = np.array([kernels.KIND_BOX] * 4 + [kernels.KIND_CYLINDER], dtype=np.int64)
    params = np.array([[-20, -20, -0.1, 20, 20, 0.0], [1, 3.1, 0, 5, 4.9, 1.5], [-4.9, -5, 0, -3.1, -1, 1.5],
                       [3.5, -6.5, 0, 4.5, -1.5, 2.5], [0.0, 6.0, 0.4, 0.0, 2.0, 0.0]])

    n_adam = 1 << 20
    p, g = rng.normal(size=n_adam), rng.normal(size=n_adam)
    m, v = np.zeros(n_adam), np.zeros(n_adam)

    return {
        "hash_forward": lambda f: f(pts, lo, scale, ncell, dense, tables, hc.n_levels),
        "hash_backward": lambda f: f(pts, lo, scale, ncell, dense, up, hc.n_levels, grad),
        "first_hit": lambda f: f(origins, dirs, kinds, params, 14.4),
        "adam_update": lambda f: f(p, g, m, v, 1e-3, 0.9, 0.99, 1e-15, 1.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=20_000, help="hash-grid query points")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cases = _cases(args.points, args.seed)
    print(f"{'kernel':<15}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, call in cases.items():
        nb = getattr(kernels, f"{name}_nb")
        npf = getattr(kernels, f"{name}_np")
        call(nb)  # compile / load from cache
        t_nb = min(timeit.repeat(lambda: call(nb), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: call(npf), number=1, repeat=args.repeat))
        print(f"{name:<15}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
