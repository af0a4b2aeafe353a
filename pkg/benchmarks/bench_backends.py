"""Benchmark the compiled kernel extension against the numpy fallback.

Times the four solver hot kernels on solver-scale arrays and one end-to-end
discrete solve per backend.  Run from the repository root:

    python benchmarks/bench_backends.py [--cells 400000] [--targets 10]
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from vsref import _numpy_impl

try:
    from vsref import _ext
except ImportError:
    _ext = None


def _timeit(fn, repeat=5):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(n_cells: int, k: int):
    rng = np.random.default_rng(0)
    t = rng.uniform(0.45, 1.0, size=n_cells)
    w = rng.uniform(0.0, 1e-4, size=n_cells)
    H = np.ascontiguousarray(rng.uniform(0.5, 1.5, size=(k, n_cells)))
    other = np.ascontiguousarray(H[1:].max(axis=0))
    exclude = np.zeros(k, dtype=np.uint8)
    exclude[0] = 1
    out = np.empty(n_cells)

    backends = [("numpy", _numpy_impl)]
    if _ext is not None:
        backends.append(("compiled", _ext))

    rows = []
    for name, impl in backends:
        rows.append(
            (
                name,
                _timeit(lambda: impl.radii_row(t, 1.0, 3.0, out)),
                _timeit(lambda: impl.rowmax_excluding(H, exclude)),
                _timeit(lambda: impl.crossing_ecc_row(t, other, 1.0)),
                _timeit(lambda: impl.winner_and_masses(H, w, 1e-12)),
            )
        )
    header = f"{'backend':>9} {'radii_row':>11} {'rowmax_excl':>12} {'crossing':>11} {'winner':>11}"
    print(f"kernel timings, {n_cells} cells x {k} targets (best of 5, seconds)")
    print(header)
    for name, *vals in rows:
        print(f"{name:>9} " + " ".join(f"{v:11.5f}" for v in vals))
    if len(rows) == 2:
        speedups = [rows[0][i] / rows[1][i] for i in range(1, 5)]
        print(f"{'speedup':>9} " + " ".join(f"{s:10.2f}x" for s in speedups))


def bench_solve(k: int, resolution: int):
    import os

    from vsref.hypotheses import CapTargetRegion
    from vsref.solver import SolveConfig, _grid_for_targets, solve_discrete

    rng = np.random.default_rng(7)
    region = CapTargetRegion(axis=[0.0, 0.0, 1.0], xi=0.05, w=1.0, W=1.15)
    alpha = math.acos(1.0 - region.xi)
    a = rng.uniform(0.0, alpha, size=k)
    phi = rng.uniform(0.0, 2.0 * math.pi, size=k)
    r = rng.uniform(region.w, region.W, size=k)
    pts = np.stack(
        [r * np.sin(a) * np.cos(phi), r * np.sin(a) * np.sin(phi), r * np.cos(a)], axis=1
    )
    cfg = SolveConfig(grid_resolution=resolution, gamma=0.7)
    grid = _grid_for_targets(pts, cfg, None)
    frac = rng.uniform(0.2, 1.0, size=k)
    masses = frac / frac.sum() * grid.total_mass

    import vsref.backend as backend

    results = {}
    for impl_name, impl in (("numpy", _numpy_impl), ("compiled", _ext)):
        if impl is None:
            continue
        saved = {
            name: getattr(backend, name)
            for name in (
                "radii_row",
                "rowmax_excluding",
                "crossing_ecc_row",
                "winner_and_masses",
                "threshold_mass",
                "NAME",
            )
        }
        for name in saved:
            setattr(backend, name, getattr(impl, name))
        try:
            t0 = time.perf_counter()
            res = solve_discrete(pts, masses, cfg=cfg, grid=grid)
            dt = time.perf_counter() - t0
            results[impl_name] = (dt, res.trace.sweeps)
        finally:
            for name, fn in saved.items():
                setattr(backend, name, fn)
    print(f"\nend-to-end discrete solve, k={k}, grid resolution {resolution}")
    for name, (dt, sweeps) in results.items():
        print(f"{name:>9}: {dt:8.2f} s  ({sweeps} sweeps)")
    if len(results) == 2:
        print(f"{'speedup':>9}: {results['numpy'][0] / results['compiled'][0]:8.2f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, default=400_000)
    ap.add_argument("--targets", type=int, default=10)
    ap.add_argument("--resolution", type=int, default=384)
    args = ap.parse_args()
    if _ext is None:
        print("compiled extension not available; timing the numpy backend only\n")
    bench_kernels(args.cells, args.targets)
    bench_solve(args.targets, args.resolution)


if __name__ == "__main__":
    main()
