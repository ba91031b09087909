"""Time the numba and numpy kernel backends on representative inputs.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from lossforge import kernels
from lossforge.verify import lemma2


def cases():
    rng = np.random.default_rng(0)
    n = 5000
    f0, f1 = rng.standard_normal(n), rng.standard_normal(n)
    labels = rng.integers(0, 2, n)
    key = labels * 2 + rng.integers(0, 2, n)
    w = np.round(np.arange(0.5, 2.0001, 0.05), 10)
    b = np.round(np.arange(-2, 2.0001, 0.05), 10)
    yield "vs_grid_counts", (f0, f1, labels, key, 4, w, b)

    X, y = lemma2.separable_pair(200, seed=0)
    yield "min_margins", (np.linspace(0, 2 * np.pi, 3600), X, y, 0.1, 0.2)

    A = X * y[:, None]
    yield "cs_svm_dual", (A @ A.T, np.where(y > 0, 2.0, 1.25), 20000, 1e-12)

    ny = len(y)
    yield "ngd_vs_binary", (X, y, np.ones(ny), np.zeros(ny), np.where(y > 0, 0.5, 1.0),
                            np.full(2, 1e-3), 0.5, 2000, np.array([0.8, 0.6]))


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("numpy", kernels.numpy_kernels)]
    if kernels.NUMBA_AVAILABLE:
        backends.append(("numba", kernels.numba_kernels()))
    print(f"{'kernel':16s}" + "".join(f"{name:>12s}" for name, _ in backends) + "   speedup")
    for name, inputs in cases():
        row = []
        for _, impl in backends:
            fn = getattr(impl, name)
            fn(*inputs)  # warm up (and compile)
            row.append(best_of(fn, inputs, args.repeat))
        speed = f"{row[0] / row[1]:9.1f}x" if len(row) > 1 else ""
        print(f"{name:16s}" + "".join(f"{t * 1e3:10.2f}ms" for t in row) + speed)


if __name__ == "__main__":
    main()
