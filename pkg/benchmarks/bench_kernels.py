"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Sizes follow the pipeline defaults: one-minute traces at 100 Hz, 20
selected features against 250 stacked atoms, 50-atom class dictionaries.
"""
import argparse
import timeit

import numpy as np

from kehmode import _kernels_py as fallback

try:
    from kehmode import _kernels as compiled
except ImportError:
    compiled = None


def cases(rng):
    trace = rng.normal(size=6000)
    window = rng.normal(size=500)
    D = rng.normal(size=(69, 50))
    D /= np.linalg.norm(D, axis=0)
    S = rng.normal(size=(69, 200))
    A = rng.normal(size=(69, 250))
    A /= np.linalg.norm(A, axis=0)
    y = A[:, :5] @ rng.normal(size=5) + 0.05 * rng.normal(size=69)
    return {
        "rolling_std (6000, k=100)": lambda k: k.rolling_std(trace, 100),
        "peak_prominences (500)": lambda k: k.peak_prominences(window),
        "omp_batch (69x50, 200 samples, tau=5)": lambda k: k.omp_batch(D, S, 5, 0.0),
        "lasso_homotopy (69x250, eps=0.05)": lambda k: k.lasso_homotopy(A, y, 0.05, 5100),
    }


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':42s} {'fallback':>12s} {'compiled':>12s} {'speedup':>8s}")
    for name, call in cases(rng).items():
        slow = best_of(lambda: call(fallback), args.repeat)
        if compiled is None:
            print(f"{name:42s} {slow * 1e3:10.3f}ms {'n/a':>12s} {'':>8s}")
            continue
        fast = best_of(lambda: call(compiled), args.repeat)
        print(f"{name:42s} {slow * 1e3:10.3f}ms {fast * 1e3:10.3f}ms {slow / fast:7.1f}x")


if __name__ == "__main__":
    main()
