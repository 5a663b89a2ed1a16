"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from driftflow import _kernels_py

try:
    from driftflow import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    for n in (100, 200, 400):
        rho = rng.random(n)
        u = rng.standard_normal(n + 1)
        u[0] = u[-1] = 0.0
        table = 1.0 / (1.0 + np.abs(np.arange(-(n - 1), n) * 0.05))
        yield f"upwind_1d n={n}", "upwind_update_1d", (rho, u, 0.01)
        yield f"convolve_1d n={n}", "convolve_1d", (rho, table, 0.05)
    for n in (30, 60):
        rho = rng.random((n, n))
        u = rng.standard_normal((n + 1, n))
        v = rng.standard_normal((n, n + 1))
        u[[0, -1]] = 0.0
        v[:, [0, -1]] = 0.0
        table = rng.random((2 * n - 1, 2 * n - 1))
        yield f"upwind_2d n={n}x{n}", "upwind_update_2d", (rho, u, v, 0.01, 0.01)
        yield f"convolve_2d n={n}x{n}", "convolve_2d", (rho, table, 0.04)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numpy [us]':>12}{'cython [us]':>13}{'speedup':>9}{'max |diff|':>12}")
    for label, name, a in cases(rng):
        f_py = getattr(_kernels_py, name)
        t_py = min(timeit.repeat(lambda: f_py(*a), number=args.repeat, repeat=3)) / args.repeat
        if _kernels is None:
            print(f"{label:<24}{t_py * 1e6:>12.1f}{'n/a':>13}")
            continue
        f_cy = getattr(_kernels, name)
        t_cy = min(timeit.repeat(lambda: f_cy(*a), number=args.repeat, repeat=3)) / args.repeat
        diff = float(np.max(np.abs(f_py(*a) - f_cy(*a))))
        print(f"{label:<24}{t_py * 1e6:>12.1f}{t_cy * 1e6:>13.1f}{t_py / t_cy:>9.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
