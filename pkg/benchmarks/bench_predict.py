"""Benchmark the prediction kernels: numba backend vs pure numpy.

Runs the point-evaluated and banded 2-D kernels plus the 1-D kernel on a
case-2-like belief at the default 201x201 grid and prints per-call timings
for whichever backend is active.  Run twice to compare:

    python benchmarks/bench_predict.py
    QIBF_BACKEND=numpy python benchmarks/bench_predict.py
"""
import math
import time

import numpy as np

from qibf import _kernels


def timeit(fn, *args, repeat=3, **kwargs):
    fn(*args, **kwargs)  # warm (JIT compile on the numba backend)
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args, **kwargs)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n = 201
    g = np.linspace(-0.8485, 0.8485, n)
    h = g[1] - g[0]
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    X, E = np.meshgrid(g, g, indexing="ij")
    belief = np.exp(-(X**2 + 1.2 * X * E + E**2) / (2 * 0.02))
    belief /= belief.sum() * h * h
    a, bu, amkc, q, kvar = 0.95, 0.0, 0.317, 0.01, 0.6333**2 * 0.01
    inf_lo = np.full(n, -np.inf)
    inf_hi = np.full(n, np.inf)
    band_lo = -0.6333 * (0.1555 - g)
    band_hi = -0.6333 * (0.0 - g)

    print(f"backend: {_kernels.active_backend()}   grid: {n}x{n}")
    t = timeit(_kernels.predict_2d_shear, belief, w, w, g, g, g, g, a, bu, amkc, q, kvar)
    print(f"predict_2d_shear            {t * 1e3:9.1f} ms")
    t = timeit(_kernels.predict_2d_banded, belief, w, w, g, g, g, g, a, bu, amkc, q,
               math.sqrt(kvar), inf_lo, inf_hi)
    print(f"predict_2d_banded (no band) {t * 1e3:9.1f} ms")
    t = timeit(_kernels.predict_2d_banded, belief, w, w, g, g, g, g, a, bu, amkc, q,
               math.sqrt(kvar), band_lo, band_hi)
    print(f"predict_2d_banded (cell)    {t * 1e3:9.1f} ms")
    t = timeit(_kernels.predict_1d, belief[:, n // 2], w, g, g, a, bu, q)
    print(f"predict_1d                  {t * 1e3:9.1f} ms")
    if _kernels.active_backend() == "numba":
        t = timeit(_kernels.predict_2d_dense, belief, w, w, g, g, g, g, a, bu,
                   amkc, q, kvar, trunc=9.0)
        print(f"predict_2d_dense (O(N^4))   {t * 1e3:9.1f} ms")
    else:
        print("predict_2d_dense (O(N^4))   skipped on numpy (minutes per call)")


if __name__ == "__main__":
    main()
