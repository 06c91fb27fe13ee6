"""Compare the compiled kernels with the pure-Python fallback.

Usage::

    python3 benchmarks/bench_backends.py [--repeat 5]

Each kernel is timed on the workloads that dominate the experiments: a single
log-likelihood, a single multistart fit, a 400 x 400 posterior grid, and a
batch of fits as in one cell of the MSE study.
"""

import argparse
import math
import timeit

import numpy as np

from robls import _fallback
from robls.dist import reference_models

try:
    from robls import _kernels
except ImportError:  # pragma: no cover - extension not built
    _kernels = None


def workloads(params, batch):
    rng = np.random.default_rng(0)
    x = np.append(np.arange(-10.0, 11.0), 100.0)
    mu = np.linspace(-40, 40, 400)
    sigma = np.geomspace(0.5, 90, 400)
    starts = np.array([[0.0, math.log(7.4)], [0.0, math.log(3.7)], [0.0, math.log(14.8)]])
    X = np.ascontiguousarray(rng.standard_normal((batch, 30)))
    bstarts = np.ascontiguousarray(np.broadcast_to(starts - [[0.0, math.log(7.4)]], (batch, 3, 2)))
    return {
        "loglik (n=22)": lambda k: k.loglik(x, params, 0.5, 6.0),
        "fit (n=22, 3 starts)": lambda k: k.fit(x, params, starts, 1e-8, 10_000),
        "loglik_grid (400x400)": lambda k: k.loglik_grid(x, params, mu, sigma, 1),
        f"fit_batch ({batch}x30)": lambda k: k.fit_batch(X, params, bstarts, 1e-8, 10_000, 1),
    }


def best_time(fn, repeat):
    number, elapsed = 1, 0.0
    while elapsed < 0.2:
        elapsed = timeit.timeit(fn, number=number)
        if elapsed < 0.2:
            number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=200)
    ap.add_argument("--model", default="log-pareto", choices=("normal", "log-pareto", "student-t"))
    args = ap.parse_args()

    params = np.ascontiguousarray(reference_models()[args.model].kernel_params())
    backends = {"python": _fallback}
    if _kernels is not None:
        backends["cython"] = _kernels
    print(f"model={args.model}")
    print(f"{'workload':<26}" + "".join(f"{b:>14}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, work in workloads(params, args.batch).items():
        times = {b: best_time(lambda k=k: work(k), args.repeat) for b, k in backends.items()}
        row = f"{name:<26}" + "".join(f"{t * 1e3:>11.4f} ms" for t in times.values())
        if len(times) > 1:
            row += f"{times['python'] / times['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
