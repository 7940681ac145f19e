"""Compare the compiled and numpy Nyquist sweep kernels.

Usage::

    python3 benchmarks/bench_sweep.py [--repeat 3] [--points 200001]

Sweeps ``det(I - D_a HR)`` for the 15-repeater circle and random swarms of
several sizes, checks both backends agree, and prints the timings.
"""

import argparse
import math
import time

import numpy as np

from repswarm import kernels
from repswarm.stability import SweepGrid, alpha_g, circle_channelset


def random_swarm(rng, n):
    hr = 1e-3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    hr = hr + hr.T
    np.fill_diagonal(hr, 0)
    tau = rng.uniform(0.1e-6, 3e-6, (n, n))
    tau = np.triu(tau, 1) + np.triu(tau, 1).T
    return hr, tau, np.full(n, 0.3 / (np.abs(hr).sum(1).max())), rng.uniform(0, 1e-6, n)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--points", type=int, default=200_001)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        raise SystemExit("compiled kernel not available; build with `pip install --no-build-isolation -e .`")

    span = 20e6
    grid = SweepGrid(2e9, span, span / (args.points - 1))
    omegas = grid.omegas()
    cases = []
    cs = circle_channelset(15, 1000.0, 2e9)
    cases.append(("circle n=15", cs.HR, cs.r2r_delay_s, np.full(15, alpha_g(cs)), np.zeros(15), cs.omega))
    rng = np.random.default_rng(0)
    for n in (2, 4, 8, 16, 32):
        cases.append((f"random n={n}", *random_swarm(rng, n), 2 * math.pi * 2e9))

    print(f"{omegas.size} frequency points, best of {args.repeat}")
    print(f"{'case':<14} {'cython s':>10} {'numpy s':>10} {'speedup':>8} {'max rel diff':>13}")
    for name, hr, tau, alpha, nu, w0 in cases:
        tc, dc = best_of(lambda: kernels.sweep_det(hr, tau, alpha, nu, omegas, w0, backend="cython"), args.repeat)
        tp, dp = best_of(lambda: kernels.sweep_det(hr, tau, alpha, nu, omegas, w0, backend="numpy"), args.repeat)
        diff = float(np.max(np.abs(dc - dp) / np.maximum(np.abs(dp), 1e-300)))
        print(f"{name:<14} {tc:>10.3f} {tp:>10.3f} {tp / tc:>8.1f} {diff:>13.1e}")


if __name__ == "__main__":
    main()
