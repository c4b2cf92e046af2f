"""Timing comparison of the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each row reports the best-of-``repeat`` wall time per call for both backends
and the speed-up. The two backends are also checked for agreement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from incrtl import _pykernels

try:
    from incrtl import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def spd_case(m: int, d: int, rng):
    X = rng.standard_normal((m, 3 * d, d))
    A = np.einsum("mij,mik->mjk", X, X)
    B = rng.standard_normal((m, d, 1))
    return A, B


def cases(rng):
    for m, d in ((1, 4), (200, 4), (20000, 4), (2000, 12)):
        A, B = spd_case(m, d, rng)
        yield f"spd_solve_batch m={m} d={d}", "spd_solve_batch", (A, B, 1e-10)
    for n in (10, 20, 60):
        w = np.arange(2, 2 * n + 2, 2, dtype=np.int64)
        yield f"signed_rank_counts n={n}", "signed_rank_counts", (w,)
    for n in (200, 1000):
        X = rng.standard_normal((n, 8))
        yield f"pairwise_sq_dists n={n}", "pairwise_sq_dists", (X, X)


def agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(agree(x, y) for x, y in zip(a, b))
    a = np.asarray(a)
    b = np.asarray(b)
    if a.dtype.kind in "iub":
        return bool(np.array_equal(a, b))
    return bool(np.allclose(a, b, rtol=1e-9, atol=1e-9, equal_nan=True))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; rebuild with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<34s} {'cython [ms]':>12s} {'python [ms]':>12s} {'speed-up':>9s}  agree")
    for label, name, inputs in cases(rng):
        fc, fp = getattr(_ckernels, name), getattr(_pykernels, name)
        tc = best_time(lambda: fc(*inputs), args.repeat)
        tp = best_time(lambda: fp(*inputs), args.repeat)
        ok = agree(fc(*inputs), fp(*inputs))
        print(f"{label:<34s} {1e3 * tc:12.3f} {1e3 * tp:12.3f} {tp / tc:9.1f}  {ok}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
