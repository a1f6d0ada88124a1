#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot kernels (nearest-center assignment, center
accumulation, box membership) across problem sizes, plus an end-to-end
kmeans fit on each backend.

Usage:
    python benchmarks/benchmark_kernels.py
    python benchmarks/benchmark_kernels.py --sizes 1000 10000 100000 --dim 16
    python benchmarks/benchmark_kernels.py --json results.json

The pure-numpy path is also what you get at runtime with
STREAMWARDEN_NO_NUMBA=1.
"""

import argparse
import json
import time

import numpy as np

from streamwarden._kernels import _numpy_impl

try:
    from streamwarden._kernels import _numba_impl
except ImportError:
    _numba_impl = None

from streamwarden.abstraction import fit_kmeans


def best_of(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def warmup_jit(dim):
    if _numba_impl is None:
        return
    pts = np.zeros((4, dim))
    ctr = np.zeros((2, dim))
    _numba_impl.nearest_center(pts, ctr)
    _numba_impl.accumulate_centers(pts, np.zeros(4, dtype=np.int64), 2)
    _numba_impl.boxes_contain(ctr, ctr, pts)


def bench_kernels(sizes, dim, k, n_boxes, repeats, rng):
    rows = []
    for n in sizes:
        points = np.ascontiguousarray(rng.normal(size=(n, dim)))
        centers = np.ascontiguousarray(rng.normal(size=(k, dim)))
        labels = rng.integers(0, k, size=n)
        lo = np.ascontiguousarray(rng.normal(size=(n_boxes, dim)) - 2)
        hi = lo + 4
        cases = [
            ("nearest_center", lambda m: m.nearest_center(points, centers)),
            ("accumulate_centers", lambda m: m.accumulate_centers(points, labels, k)),
            ("boxes_contain", lambda m: m.boxes_contain(lo, hi, points)),
        ]
        for name, call in cases:
            t_np = best_of(lambda: call(_numpy_impl), repeats)
            t_nb = best_of(lambda: call(_numba_impl), repeats) if _numba_impl else None
            rows.append(
                {
                    "kernel": name,
                    "n": n,
                    "dim": dim,
                    "numpy_s": t_np,
                    "numba_s": t_nb,
                    "speedup": (t_np / t_nb) if t_nb else None,
                }
            )
    return rows


def bench_fit(sizes, dim, k, repeats, rng):
    import os
    import importlib
    import streamwarden._kernels as kernels
    import streamwarden.abstraction as abstraction

    rows = []
    for n in sizes:
        points = rng.normal(size=(n, dim))
        timings = {}
        for backend, flag in (("numba", ""), ("numpy", "1")):
            if backend == "numba" and _numba_impl is None:
                timings[backend] = None
                continue
            os.environ["STREAMWARDEN_NO_NUMBA"] = flag
            importlib.reload(kernels)
            importlib.reload(abstraction)
            timings[backend] = best_of(
                lambda: abstraction.fit_kmeans(points, k=k, seed=0), repeats
            )
        os.environ.pop("STREAMWARDEN_NO_NUMBA", None)
        importlib.reload(kernels)
        importlib.reload(abstraction)
        rows.append(
            {
                "kernel": f"fit_kmeans(k={k})",
                "n": n,
                "dim": dim,
                "numpy_s": timings["numpy"],
                "numba_s": timings["numba"],
                "speedup": (timings["numpy"] / timings["numba"]) if timings["numba"] else None,
            }
        )
    return rows


def print_table(rows):
    print(f"{'kernel':<22} {'n':>8} {'dim':>4} {'numpy (s)':>12} {'numba (s)':>12} {'speedup':>8}")
    print("-" * 72)
    for r in rows:
        numba_s = f"{r['numba_s']:.6f}" if r["numba_s"] is not None else "n/a"
        speedup = f"{r['speedup']:.1f}x" if r["speedup"] is not None else "n/a"
        print(
            f"{r['kernel']:<22} {r['n']:>8} {r['dim']:>4} "
            f"{r['numpy_s']:>12.6f} {numba_s:>12} {speedup:>8}"
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", nargs="+", type=int, default=[1_000, 10_000, 100_000])
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--k", type=int, default=8)
    parser.add_argument("--n-boxes", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--json", default=None, help="also write results as JSON")
    args = parser.parse_args()

    if _numba_impl is None:
        print("numba unavailable: timing the numpy fallback only\n")
    else:
        print("warming up JIT...")
        warmup_jit(args.dim)

    rng = np.random.default_rng(0)
    rows = bench_kernels(args.sizes, args.dim, args.k, args.n_boxes, args.repeats, rng)
    rows += bench_fit([min(args.sizes), max(args.sizes)], args.dim, args.k, max(2, args.repeats // 2), rng)
    print_table(rows)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
        print(f"\nwrote {args.json}")


if __name__ == "__main__":
    main()
