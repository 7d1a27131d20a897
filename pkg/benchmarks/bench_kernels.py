"""Timing comparison of the numba kernels against the numpy fallbacks.

Run from the repo root::

    python benchmarks/bench_kernels.py --nodes 20000 --avg-degree 8 --dim 256

The spmm benchmark mimics one message-passing layer; the k-means
benchmark times the assignment step that dominates Lloyd iterations.
"""

import argparse
import time

import numpy as np

from hypergrl import kernels
from hypergrl.backend import backend_name


def random_csr(rng, n, avg_degree):
    nnz = n * avg_degree
    src = rng.integers(0, n, size=nnz)
    dst = rng.integers(0, n, size=nnz)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    weights = rng.random(nnz).astype(np.float32)
    return indptr, dst.astype(np.int64), weights


def timeit(fn, repeats):
    fn()  # warm-up (numba compiles here)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=20000)
    ap.add_argument("--avg-degree", type=int, default=8)
    ap.add_argument("--dim", type=int, default=256)
    ap.add_argument("--clusters", type=int, default=16)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    print(f"active backend: {backend_name()}")

    indptr, indices, weights = random_csr(rng, args.nodes, args.avg_degree)
    x = rng.random((args.nodes, args.dim)).astype(np.float32)

    rows = []
    t_np = timeit(lambda: kernels.spmm_numpy(indptr, indices, weights, x, args.nodes),
                  args.repeats)
    rows.append(("spmm", "numpy", t_np))
    if kernels.spmm_numba is not None:
        t_nb = timeit(lambda: kernels.spmm_numba(indptr, indices, weights, x, args.nodes),
                      args.repeats)
        rows.append(("spmm", "numba", t_nb))
        got = kernels.spmm_numba(indptr, indices, weights, x, args.nodes)
        want = kernels.spmm_numpy(indptr, indices, weights, x, args.nodes)
        assert np.allclose(got, want, atol=1e-4), "backend results disagree"

    z = rng.random((args.nodes, args.dim))
    centers = z[rng.choice(args.nodes, args.clusters, replace=False)]
    t_np = timeit(lambda: kernels.kmeans_assign_numpy(z, centers), args.repeats)
    rows.append(("kmeans_assign", "numpy", t_np))
    if kernels.kmeans_assign_numba is not None:
        t_nb = timeit(lambda: kernels.kmeans_assign_numba(z, centers), args.repeats)
        rows.append(("kmeans_assign", "numba", t_nb))
        la, da = kernels.kmeans_assign_numba(z, centers)
        lb, db = kernels.kmeans_assign_numpy(z, centers)
        assert np.array_equal(la, lb) and np.allclose(da, db)

    print(f"\n{'kernel':<16s} {'impl':<7s} {'best of ' + str(args.repeats):>12s}")
    for kernel, impl, t in rows:
        print(f"{kernel:<16s} {impl:<7s} {t * 1e3:>10.2f}ms")
    by_kernel = {}
    for kernel, impl, t in rows:
        by_kernel.setdefault(kernel, {})[impl] = t
    for kernel, impls in by_kernel.items():
        if len(impls) == 2:
            print(f"{kernel}: numba is {impls['numpy'] / impls['numba']:.1f}x "
                  f"vs numpy")


if __name__ == "__main__":
    main()
