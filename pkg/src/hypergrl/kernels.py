"""Hot numeric kernels: CSR*dense products and k-means inner loops.

Each kernel has a numba ``@njit`` implementation and a pure-numpy fallback.
The active path is chosen at import from ``HGRL_BACKEND`` (see
:mod:`hypergrl.backend`); both implementations are importable directly for
benchmarking and cross-checking. Per-row accumulation order is fixed (CSR
edge order), so results are bit-deterministic for a given backend
regardless of thread count.
"""

import numpy as np

from .backend import USE_NUMBA


# ---------------------------------------------------------------------------
# sparse matrix (CSR) times dense matrix
# ---------------------------------------------------------------------------

def spmm_numpy(indptr, indices, weights, x, n_rows):
    """out[i] = sum_e weights[e] * x[indices[e]] over row i's edge range."""
    out = np.zeros((n_rows, x.shape[1]), dtype=np.result_type(weights, x))
    if indices.shape[0] == 0:
        return out
    contrib = weights[:, None] * x[indices]
    counts = np.diff(indptr)
    nonempty = counts > 0
    # reduceat segment i runs to the next start; empty rows are skipped so
    # each remaining segment is exactly one row's edge range
    out[nonempty] = np.add.reduceat(contrib, indptr[:-1][nonempty], axis=0)
    return out


if USE_NUMBA:
    from numba import njit, prange

    @njit(cache=True, parallel=True)
    def _spmm_nb(indptr, indices, weights, x, out):
        n_rows = indptr.shape[0] - 1
        d = x.shape[1]
        for i in prange(n_rows):
            for c in range(d):
                out[i, c] = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                j = indices[e]
                w = weights[e]
                for c in range(d):
                    out[i, c] += w * x[j, c]

    def spmm_numba(indptr, indices, weights, x, n_rows):
        dt = np.result_type(weights, x)
        out = np.empty((n_rows, x.shape[1]), dtype=dt)
        _spmm_nb(indptr, indices, weights.astype(dt, copy=False),
                 np.ascontiguousarray(x, dtype=dt), out)
        return out

    spmm = spmm_numba
else:
    spmm_numba = None
    spmm = spmm_numpy


# ---------------------------------------------------------------------------
# k-means: nearest-centroid assignment and per-cluster accumulation
# ---------------------------------------------------------------------------

def kmeans_assign_numpy(x, centers):
    """Labels and squared distance to the nearest center, exact arithmetic."""
    n = x.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    best = np.full(n, np.inf, dtype=np.float64)
    for c in range(centers.shape[0]):
        diff = x - centers[c]
        d2 = np.einsum("ij,ij->i", diff, diff)
        closer = d2 < best
        labels[closer] = c
        best[closer] = d2[closer]
    return labels, best


def kmeans_accumulate_numpy(x, labels, k):
    sums = np.zeros((k, x.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k)
    return sums, counts


if USE_NUMBA:

    @njit(cache=True)
    def _kmeans_assign_nb(x, centers, labels, best):
        n, d = x.shape
        k = centers.shape[0]
        for i in range(n):
            bi = 0
            bd = np.inf
            for c in range(k):
                acc = 0.0
                for j in range(d):
                    t = x[i, j] - centers[c, j]
                    acc += t * t
                if acc < bd:
                    bd = acc
                    bi = c
            labels[i] = bi
            best[i] = bd

    def kmeans_assign_numba(x, centers):
        x = np.ascontiguousarray(x, dtype=np.float64)
        centers = np.ascontiguousarray(centers, dtype=np.float64)
        labels = np.empty(x.shape[0], dtype=np.int64)
        best = np.empty(x.shape[0], dtype=np.float64)
        _kmeans_assign_nb(x, centers, labels, best)
        return labels, best

    @njit(cache=True)
    def _kmeans_accumulate_nb(x, labels, sums, counts):
        n, d = x.shape
        for i in range(n):
            c = labels[i]
            counts[c] += 1
            for j in range(d):
                sums[c, j] += x[i, j]

    def kmeans_accumulate_numba(x, labels, k):
        sums = np.zeros((k, x.shape[1]), dtype=np.float64)
        counts = np.zeros(k, dtype=np.int64)
        _kmeans_accumulate_nb(np.ascontiguousarray(x, dtype=np.float64),
                              labels, sums, counts)
        return sums, counts

    kmeans_assign = kmeans_assign_numba
    kmeans_accumulate = kmeans_accumulate_numba
else:
    kmeans_assign_numba = None
    kmeans_accumulate_numba = None
    kmeans_assign = kmeans_assign_numpy
    kmeans_accumulate = kmeans_accumulate_numpy


def csr_transpose(indptr, indices, weights, n_rows, n_cols):
    """Transpose a weighted CSR matrix; output rows keep sorted indices."""
    order = np.argsort(indices, kind="stable")
    row_of_edge = np.repeat(np.arange(n_rows, dtype=indices.dtype),
                            np.diff(indptr))
    t_indptr = np.zeros(n_cols + 1, dtype=indptr.dtype)
    np.cumsum(np.bincount(indices, minlength=n_cols), out=t_indptr[1:])
    return t_indptr, row_of_edge[order], weights[order]
