"""Compiled vs pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--quick]

Prints wall time per backend and checks the outputs agree.
"""
import argparse
import time

import numpy as np

from rootembed import backend
from rootembed.barrier import extract_barrier
from rootembed.model import DiffusionSpec, ProbabilityMeasure
from rootembed.simulator import SimConfig, simulate_hitting
from rootembed.solver import build_grid, solve_vi


def timed(fn, repeat=1):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller sizes")
    args = ap.parse_args()
    if not backend.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    sigma = DiffusionSpec.constant(1.0)
    nu = ProbabilityMeasure.dirac(0.0)
    mu = ProbabilityMeasure.atoms([-1.0, 1.0], [0.5, 0.5])
    dx = 0.04 if args.quick else 0.02
    grid = build_grid(nu, mu, sigma, 2.0, dx=dx)
    cells = grid.nx * grid.nt
    print(f"obstacle solver: {grid.nx} nodes x {grid.nt} steps")
    times = {}
    surfaces = {}
    for name in ("compiled", "python"):
        times[name], surfaces[name] = timed(lambda: solve_vi(nu, mu, 0.0, sigma, grid, name), 3)
        print(f"  {name:9s} {times[name]:8.3f} s  {1e9 * times[name] / cells:7.2f} ns/cell")
    same = np.array_equal(surfaces["compiled"].frames, surfaces["python"].frames)
    print(f"  speedup {times['python'] / times['compiled']:.1f}x, bitwise identical: {same}")

    b = extract_barrier(surfaces["compiled"])
    n_paths = 200 if args.quick else 1000
    cfg = SimConfig(n_paths, 1e-3, 4.0, 7, checkpoint_times=(1.0, 2.0))
    print(f"path simulator: {n_paths} paths, dt={cfg.dt_sim}")
    ens = {}
    for name in ("compiled", "python"):
        times[name], ens[name] = timed(lambda: simulate_hitting(nu, sigma, b, cfg, name))
        steps = float(np.sum(ens[name].tau)) / cfg.dt_sim
        print(f"  {name:9s} {times[name]:8.3f} s  {1e9 * times[name] / steps:7.1f} ns/path-step")
    same_tau = np.array_equal(ens["compiled"].tau, ens["python"].tau)
    dev = float(np.max(np.abs(ens["compiled"].checkpoints - ens["python"].checkpoints)))
    print(f"  speedup {times['python'] / times['compiled']:.1f}x, identical stopping times: "
          f"{same_tau}, max checkpoint deviation {dev:.1e}")


if __name__ == "__main__":
    main()
