"""Time the numba and numpy implementations of each hot kernel.

Usage::

    python3 benchmarks/bench_backends.py [--repeat 5]

Each kernel is called once before timing so numba compilation is not
counted. Reported numbers are the best of `--repeat` runs.
"""

import argparse
import time

import numpy as np

from pgica._kernels import load_numba_impl, numpy_impl
from pgica.theory import NoiselessModel


def _best(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n=2000, d=8, seed=0):
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, d))
    A = g.standard_normal((d, d)) + 3 * np.eye(d)
    W = np.linalg.inv(A)
    T = g.uniform(0.05, 2.0, (n, d))
    Z = g.standard_normal((n, d))
    params = NoiselessModel.build("sech", d).kernel_params()
    c = np.abs(2 * g.standard_normal(n * d))
    return {
        "pg1_draws": lambda impl: impl.pg1_draws(c, np.random.default_rng(1)),
        "gibbs_sources": lambda impl: impl.gibbs_sources(X, A, T, 0.05, Z),
        "source_loglik_sum": lambda impl: impl.source_loglik_sum(W, X, *params),
        "em_z_matrices": lambda impl: impl.em_z_matrices(W, X),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--d", type=int, default=8)
    args = ap.parse_args()
    nb = load_numba_impl()
    print(f"n={args.n} d={args.d}, best of {args.repeat}")
    print(f"{'kernel':<20}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, call in cases(args.n, args.d).items():
        t_nb = _best(lambda: call(nb), args.repeat)
        t_np = _best(lambda: call(numpy_impl), args.repeat)
        print(f"{name:<20}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
