"""Benchmark the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]
Sizes mirror a real-corpus training step (768-dim projection over 2^18
hashed buckets, 40-label focal batches, 50k-feature CSR rows).
"""

import argparse
import time

import numpy as np

from labelnet import _kernels


def timeit(fn, *args, repeats=5, warmup=1):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeats):
        tic = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - tic)
    return best


def build_cases(rng):
    d_enc, buckets, nnz = 768, 1 << 18, 800
    proj = rng.normal(size=(d_enc, buckets))
    idx = np.sort(rng.choice(buckets, size=nnz, replace=False)).astype(np.int64)
    val = rng.normal(size=nnz)
    d_out = rng.normal(size=d_enc)
    d_proj = np.zeros_like(proj)

    logits = rng.normal(size=(32, 40))
    targets = rng.integers(0, 40, size=32)
    weights = rng.uniform(0.1, 10.0, size=40)

    rows, cols, row_nnz = 2000, 50_000, 120
    indptr = np.arange(0, rows * row_nnz + 1, row_nnz, dtype=np.int64)
    indices = rng.integers(0, cols, size=rows * row_nnz).astype(np.int64)
    data = rng.normal(size=rows * row_nnz)
    w = rng.normal(size=cols)
    resid = rng.normal(size=rows)

    probs = rng.random(10_000)
    pos = (rng.random(10_000) < 0.2).astype(np.float64)
    taus = np.round(np.arange(1, 100) / 100.0, 2)

    return [
        ("hashed_matvec", (proj, idx, val)),
        ("hashed_matvec_grad", (d_out, idx, val, d_proj)),
        ("focal_terms", (logits, targets, weights, 2.0)),
        ("csr_matvec", (indptr, indices, data, w, 0.0)),
        ("csr_rmatvec", (indptr, indices, data, resid, cols)),
        ("f1_grid", (probs, pos, taus)),
    ]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _kernels.NUMBA_IMPLS is None:
        print("numba not installed: benchmarking the numpy fallback only")
    rng = np.random.default_rng(0)
    cases = build_cases(rng)
    print(f"{'kernel':<20} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    for name, call_args in cases:
        t_np = timeit(_kernels.NUMPY_IMPLS[name], *call_args, repeats=args.repeats)
        if _kernels.NUMBA_IMPLS is not None:
            t_nb = timeit(_kernels.NUMBA_IMPLS[name], *call_args, repeats=args.repeats)
            print(f"{name:<20} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} {t_np / t_nb:>8.1f}x")
        else:
            print(f"{name:<20} {t_np * 1e3:>12.3f} {'-':>12} {'-':>9}")


if __name__ == "__main__":
    main()
