"""Wall-clock comparison of the numba and pure-numpy integrator backends.

    python benchmarks/bench_backends.py --n 2000 --repeat 3

The first numba call may include compilation (cached on disk afterwards); it is
timed separately and excluded from the per-repeat numbers.
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from qpd import CentralSuperposition, FreeGaussian1D, IntegratorSettings, dbb_initial_velocity
from qpd.dynamics import run_kernel
from qpd.stepper import QPD


def free_case(n):
    rng = np.random.default_rng(0)
    Y0 = np.zeros((n, 6))
    Y0[:, 0] = rng.standard_normal(n)
    Y0[:, 3] = 1.0 + rng.standard_normal(n)
    return FreeGaussian1D(), Y0, IntegratorSettings(t_end=10.0, n_samples=11)


def central_case(n):
    model = CentralSuperposition(1, (0.3 + 0.2j, 0.5, 0.8 - 0.1j), m0=2.0)
    rng = np.random.default_rng(1)
    Y0 = np.zeros((n, 6))
    for i in range(n):
        x = rng.normal(size=3)
        x *= rng.uniform(1.0, 3.0) / np.linalg.norm(x)
        Y0[i, :3] = x
        Y0[i, 3:] = 1.2 * dbb_initial_velocity(model, x) + 0.2 * x / np.linalg.norm(x)
    return model, Y0, IntegratorSettings(t_end=20.0, n_samples=11, escape_radius=np.inf)


def timed(model, Y0, settings, backend, repeat):
    s = replace(settings, backend=backend)
    t0 = time.perf_counter()
    ref = run_kernel(model, QPD, Y0, 0.0, s.times(0.0), s)
    first = time.perf_counter() - t0
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        run_kernel(model, QPD, Y0, 0.0, s.times(0.0), s)
        best = min(best, time.perf_counter() - t0)
    return first, best, ref[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'case':<10}{'backend':<8}{'first [s]':>12}{'best [s]':>12}{'traj/s':>12}")
    for name, build in (("free", free_case), ("central", central_case)):
        model, Y0, settings = build(args.n)
        outs = {}
        for backend in ("numba", "numpy"):
            first, best, out = timed(model, Y0, settings, backend, args.repeat)
            outs[backend] = out
            print(f"{name:<10}{backend:<8}{first:>12.3f}{best:>12.3f}{args.n / best:>12.0f}")
        gap = np.nanmax(np.abs(outs["numba"] - outs["numpy"]))
        print(f"{name:<10}max |numba - numpy| = {gap:.2e}")


if __name__ == "__main__":
    main()
