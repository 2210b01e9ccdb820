"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat R]

Prints one line per kernel with the best-of-R time for each backend and the
speedup. The workloads mirror the hot paths: single-vector expansions inside
the identity sweeps, batched gradients and eigendecompositions inside the
solver residual.
"""
import argparse
import timeit

import numpy as np

from sigmahess.kernels import get_backend


def workloads(rng):
    xs = [rng.standard_normal(8) for _ in range(2000)]
    X = rng.standard_normal((20_000, 3))
    B = rng.standard_normal((20_000, 3, 3))
    A = B + B.transpose(0, 2, 1)
    return {
        "esp_all (2000 x n=8)": lambda m: [m.esp_all(x) for x in xs],
        "batch_esp (20000 x n=3, k=2)": lambda m: m.batch_esp(X, 2),
        "batch_sigma_grad (20000 x n=3, k=2)": lambda m: m.batch_sigma_grad(X, 2),
        "batch_jacobi_eigh (20000 3x3)": lambda m: m.batch_jacobi_eigh(A),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    py = get_backend("python")
    cy = get_backend("cython")
    if cy is None:
        print("compiled extension not available; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>9s}")
    for name, fn in workloads(rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{name:40s} {t_py:12.4f} {'-':>12s} {'-':>9s}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
        print(f"{name:40s} {t_py:12.4f} {t_cy:12.4f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
