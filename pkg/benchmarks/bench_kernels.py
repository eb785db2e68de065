"""Throughput comparison of the compiled and pure-Python kernel backends.

Usage:  python3 benchmarks/bench_kernels.py [--steps N] [--dim D] [--repeat R]

Times the four per-step recursion kernels on identical inputs under both
implementations and prints the speedup of the compiled extension.
"""

import argparse
import time

import numpy as np

from varopt.backend import fallback

try:
    from varopt.backend import _core
except ImportError:
    _core = None


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _workloads(steps, dim, rng):
    dtilde = 3
    x0 = rng.standard_normal(dim)
    dual_steps = 0.01 * rng.standard_normal((steps, dim))
    m_diag = rng.uniform(0.5, 2.0, dim)
    zbar = rng.standard_normal((steps, dim))
    scale = rng.uniform(0.0, 0.5, steps)
    m = rng.standard_normal((dtilde, dtilde))
    a_til = np.eye(dtilde) - 0.05 * (m @ m.T + np.eye(dtilde))
    l_til = 0.05 * np.eye(dtilde)
    b_vec = rng.standard_normal(dtilde)
    g = rng.standard_normal((steps, dim))
    p1 = 0.9 * np.eye(dtilde)
    k_inf = rng.uniform(0.1, 0.4, dtilde)
    return {
        "mirror_run": lambda impl: impl.mirror_run(x0, dual_steps, 0, m_diag),
        "affine_sgd_run": lambda impl: impl.affine_sgd_run(x0, zbar, scale, m_diag),
        "kalman_filter_run": lambda impl: impl.kalman_filter_run(
            g, a_til, l_til, b_vec, 0.2, np.eye(dtilde)),
        "momentum_filter_run": lambda impl: impl.momentum_filter_run(g, p1, k_inf),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=20_000)
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    loads = _workloads(args.steps, args.dim, rng)

    print(f"steps = {args.steps}, dim = {args.dim}, best of {args.repeat}")
    header = f"{'kernel':<22}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call in loads.items():
        t_py = _time(lambda: call(fallback), args.repeat)
        if _core is None:
            print(f"{name:<22}{1e3 * t_py:>14.2f}{'n/a':>14}{'n/a':>10}")
            continue
        a = call(fallback)
        b = call(_core)
        a0 = a[0] if isinstance(a, tuple) else a
        b0 = b[0] if isinstance(b, tuple) else b
        if np.max(np.abs(np.asarray(a0) - np.asarray(b0))) > 1e-10:
            raise RuntimeError(f"backend disagreement in {name}")
        t_cy = _time(lambda: call(_core), args.repeat)
        print(f"{name:<22}{1e3 * t_py:>14.2f}{1e3 * t_cy:>14.2f}"
              f"{t_py / t_cy:>10.1f}x")


if __name__ == "__main__":
    main()
