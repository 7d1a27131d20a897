"""Kernel backend selection and thread capping.

Two environment variables control execution:

* ``HGRL_BACKEND`` -- ``auto`` (default), ``numba``, or ``numpy``. ``auto``
  uses the numba JIT kernels when numba imports cleanly and falls back to
  the pure-numpy implementations otherwise. ``numba``/``numpy`` force one
  path; forcing ``numba`` without a working numba install raises at import.
* ``HGRL_THREADS`` -- caps internal parallelism (numba thread pool and, when
  threadpoolctl is importable, the BLAS pool). Defaults to 1 so results are
  bit-deterministic run to run.
"""

import os

# Probe TBB versions lazily inside numba otherwise; workqueue is fork-safe
# and always available.
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

_VALID_BACKENDS = ("auto", "numba", "numpy")


def _requested_backend():
    value = os.environ.get("HGRL_BACKEND", "auto").strip().lower()
    if value not in _VALID_BACKENDS:
        raise ValueError(
            f"HGRL_BACKEND must be one of {_VALID_BACKENDS}, got {value!r}"
        )
    return value


_requested = _requested_backend()

if _requested == "numpy":
    NUMBA_AVAILABLE = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:
        if _requested == "numba":
            raise
        NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and _requested in ("auto", "numba")


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def thread_cap():
    """Requested thread cap from HGRL_THREADS (default 1)."""
    raw = os.environ.get("HGRL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"HGRL_THREADS must be an integer, got {raw!r}")
    return max(1, n)


_blas_limiter = None  # keeps the threadpoolctl limit alive for the process


def set_threads(n):
    """Cap numba and BLAS pools at ``n`` threads. Returns the applied cap."""
    n = max(1, int(n))
    if NUMBA_AVAILABLE:
        import numba

        n_numba = min(n, numba.config.NUMBA_NUM_THREADS)
        numba.set_num_threads(n_numba)
    global _blas_limiter
    try:
        from threadpoolctl import threadpool_limits

        _blas_limiter = threadpool_limits(limits=n)
    except ImportError:
        pass
    return n


set_threads(thread_cap())
