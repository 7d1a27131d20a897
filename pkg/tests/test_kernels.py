"""Numba kernels against their numpy fallbacks and brute-force oracles."""

import numpy as np
import pytest

from hypergrl import kernels


def random_csr(rng, n, density=0.3):
    dense = np.where(rng.random((n, n)) < density, rng.normal(size=(n, n)), 0.0)
    indptr = np.zeros(n + 1, dtype=np.int64)
    cols, vals = [], []
    for i in range(n):
        nz = np.flatnonzero(dense[i])
        indptr[i + 1] = indptr[i] + nz.size
        cols.extend(nz)
        vals.extend(dense[i, nz])
    return dense, indptr, np.asarray(cols, dtype=np.int64), np.asarray(vals)


def test_spmm_numpy_matches_dense():
    rng = np.random.default_rng(0)
    dense, indptr, cols, vals = random_csr(rng, 12)
    x = rng.normal(size=(12, 6))
    got = kernels.spmm_numpy(indptr, cols, vals, x, 12)
    assert np.allclose(got, dense @ x, atol=1e-12)


def test_spmm_numpy_empty_rows_and_empty_matrix():
    indptr = np.array([0, 0, 2, 2, 3], dtype=np.int64)
    cols = np.array([0, 3, 1], dtype=np.int64)
    vals = np.array([2.0, -1.0, 0.5])
    x = np.arange(8, dtype=np.float64).reshape(4, 2)
    got = kernels.spmm_numpy(indptr, cols, vals, x, 4)
    want = np.array([[0, 0], [2 * 0 - 6, 2 * 1 - 7], [0, 0], [1.0, 1.5]])
    assert np.allclose(got, want)
    empty = kernels.spmm_numpy(np.zeros(5, dtype=np.int64), np.zeros(0, dtype=np.int64),
                               np.zeros(0), x, 4)
    assert np.array_equal(empty, np.zeros((4, 2)))


@pytest.mark.skipif(kernels.spmm_numba is None, reason="numba backend inactive")
def test_spmm_backends_agree():
    rng = np.random.default_rng(1)
    dense, indptr, cols, vals = random_csr(rng, 40, density=0.1)
    x = rng.normal(size=(40, 9))
    a = kernels.spmm_numba(indptr, cols, vals, x, 40)
    b = kernels.spmm_numpy(indptr, cols, vals, x, 40)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_kmeans_assign_matches_bruteforce():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(60, 5))
    centers = rng.normal(size=(4, 5))
    labels, d2 = kernels.kmeans_assign(x, centers)
    full = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    assert np.array_equal(labels, full.argmin(axis=1))
    assert np.allclose(d2, full.min(axis=1), rtol=1e-12)


@pytest.mark.skipif(kernels.kmeans_assign_numba is None, reason="numba backend inactive")
def test_kmeans_assign_backends_agree():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(80, 7))
    centers = rng.normal(size=(5, 7))
    la, da = kernels.kmeans_assign_numba(x, centers)
    lb, db = kernels.kmeans_assign_numpy(x, centers)
    assert np.array_equal(la, lb)
    assert np.allclose(da, db, rtol=1e-12)


def test_kmeans_accumulate_matches_add_at():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(50, 3))
    labels = rng.integers(0, 6, size=50)
    sums, counts = kernels.kmeans_accumulate(x, labels, 6)
    want = np.zeros((6, 3))
    np.add.at(want, labels, x)
    assert np.allclose(sums, want, rtol=1e-12)
    assert np.array_equal(counts, np.bincount(labels, minlength=6))


def test_csr_transpose_round_trip():
    rng = np.random.default_rng(5)
    dense, indptr, cols, vals = random_csr(rng, 15)
    t_indptr, t_cols, t_vals = kernels.csr_transpose(indptr, cols, vals, 15, 15)
    back = np.zeros((15, 15))
    for i in range(15):
        for e in range(t_indptr[i], t_indptr[i + 1]):
            back[i, t_cols[e]] = t_vals[e]
    assert np.allclose(back, dense.T)
    # columns within each transposed row come out sorted
    for i in range(15):
        row = t_cols[t_indptr[i]:t_indptr[i + 1]]
        assert np.all(np.diff(row) > 0)


def test_backend_flag_validation():
    import subprocess
    import sys
    code = ("import hypergrl.backend as b; print(b.backend_name())")
    for flag, expect_ok in (("numpy", True), ("numba", True), ("auto", True),
                            ("cuda", False)):
        proc = subprocess.run([sys.executable, "-c", code],
                              env={"PATH": "/usr/bin:/bin:/usr/local/bin",
                                   "HGRL_BACKEND": flag},
                              capture_output=True, text=True)
        if expect_ok:
            assert proc.returncode == 0, proc.stderr
            if flag == "numpy":
                assert proc.stdout.strip() == "numpy"
        else:
            assert proc.returncode != 0


def test_numpy_backend_subprocess_runs_spmm():
    import subprocess
    import sys
    code = (
        "import numpy as np\n"
        "from hypergrl import kernels\n"
        "assert kernels.spmm is kernels.spmm_numpy\n"
        "out = kernels.spmm(np.array([0,1,2]), np.array([1,0]), np.array([1.0,1.0]),"
        " np.eye(2), 2)\n"
        "assert np.allclose(out, [[0,1],[1,0]])\n"
        "print('ok')\n")
    proc = subprocess.run([sys.executable, "-c", code],
                          env={"PATH": "/usr/bin:/bin:/usr/local/bin",
                               "HGRL_BACKEND": "numpy"},
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "ok", proc.stderr
