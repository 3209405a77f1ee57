#!/usr/bin/env python3
"""Compare the numba and pure-numpy versions of the simulator/oracle kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from pcmsar import _kernels, sim


def _time(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _echo_args():
    g = sim.desk_geometry()
    grid = sim.centered_grid(g, 512, 512)
    t = sim.PointTarget.at_pixel(g, grid, 256, 256)
    return (grid.eta(g.prf), grid.tau(g.fs), t.x, t.r, 1.0 + 0j, g.v, g.c, g.lam, g.kr, g.tp, g.beam), (g, grid)


def _oracle_args(n_pix):
    (eta, tau, *_), (g, grid) = _echo_args()
    Y = sim.simulate_point_echo(g, sim.PointTarget.at_pixel(g, grid, 256, 256), grid)
    rows = np.arange(256 - n_pix // 2, 256 + (n_pix + 1) // 2, dtype=float)
    cols = rows.copy()
    x_pix = sim.Grid.x_of(g, rows)
    r_pix = grid.range_of(g, cols)
    shape = (rows.size, cols.size)
    lo_r, hi_r, lo_c, hi_c = (np.empty(shape, dtype=np.int64) for _ in range(4))
    for a in range(rows.size):
        for b in range(cols.size):
            i0, i1, k0, k1 = sim._support(g, grid, sim.PointTarget(x_pix[a], r_pix[b]))
            lo_r[a, b], hi_r[a, b] = max(i0, 0), min(i1 + 1, grid.n_pulses)
            lo_c[a, b], hi_c[a, b] = max(k0, 0), min(k1 + 1, grid.n_samples)
    return (Y, eta, tau, x_pix, r_pix, g.v, g.c, g.lam, g.kr, g.tp, g.beam, lo_r, hi_r, lo_c, hi_c)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pixels", type=int, default=5, help="oracle window side")
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        raise SystemExit("numba is not installed")

    echo, _ = _echo_args()
    oracle = _oracle_args(args.pixels)
    cases = [
        ("echo_patch 512x512", _kernels.echo_patch_numpy, _kernels.echo_patch_numba, echo),
        (f"oracle_window {args.pixels}x{args.pixels}", _kernels.oracle_window_numpy,
         _kernels.oracle_window_numba, oracle),
    ]
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, f_np, f_nb, a in cases:
        t_np = _time(lambda: f_np(*a), args.repeat)
        t_nb = _time(lambda: f_nb(*a), args.repeat)
        diff = np.max(np.abs(f_np(*a) - f_nb(*a)))
        print(f"{name:<24}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
