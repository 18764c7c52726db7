"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ftdcascade import _fallback
from ftdcascade.smoothing import SusanParams, geodesic_neighborhoods
from ftdcascade.surface import _candidate_triangles, icosphere

try:
    from ftdcascade import _core
except ImportError:
    _core = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(seed=0):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(0.5, 1.0, (100, 10)), rng.normal(-0.5, 1.0, (100, 10))])
    y = np.r_[np.ones(100), -np.ones(100)]
    K = np.ascontiguousarray(x @ x.T)
    yield "smo_solve (n=200, d=10)", lambda mod: mod.smo_solve(K, y, 1.0, 1e-3, 10000 * 200)

    inner = icosphere(4, 50.0)
    outer_pts = inner.vertices * 1.05
    indptr, indices = _candidate_triangles(outer_pts, inner)
    t = inner.triangles
    a, b, c = (np.ascontiguousarray(inner.vertices[t[:, i]]) for i in range(3))
    yield (f"nearest_triangle_distance ({len(outer_pts)} points)",
           lambda mod: mod.nearest_triangle_distance(outer_pts, a, b, c, indptr, indices))

    params = SusanParams(15.0)
    nb = geodesic_neighborhoods(inner, params.radius)
    values = 2.5 + 0.3 * rng.standard_normal(inner.n_vertices)
    yield (f"susan_sums ({inner.n_vertices} vertices, {nb[1].size} pairs)",
           lambda mod: mod.susan_sums(values, nb[0], nb[1], nb[2], params.sigma, 0.1, 6.0))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':48s} {'compiled s':>11s} {'fallback s':>11s} {'speedup':>8s}")
    for name, run in cases():
        slow = _best(lambda: run(_fallback), args.repeat)
        if _core is None:
            print(f"{name:48s} {'n/a':>11s} {slow:11.4f} {'n/a':>8s}")
            continue
        fast = _best(lambda: run(_core), args.repeat)
        print(f"{name:48s} {fast:11.4f} {slow:11.4f} {slow / fast:7.1f}x")


if __name__ == "__main__":
    main()
