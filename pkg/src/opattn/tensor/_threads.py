"""Pin BLAS pools to one thread so they cannot starve the jitted kernels.

The engine parallelizes its convolution inner loops across all cores with
numba; on small-core machines a concurrently spinning multi-threaded BLAS
pool slows every kernel launch by an order of magnitude (measured 4x+ on a
2-core box). Matmuls here are small enough that single-threaded BLAS loses
nothing. Fixing the pool size also removes thread-count variation from GEMM
reduction orders, which keeps results machine-deterministic.
"""

import logging

log = logging.getLogger(__name__)

_limiter = None


def limit_blas_threads() -> None:
    global _limiter
    if _limiter is not None:
        return
    try:
        import threadpoolctl
        _limiter = threadpoolctl.threadpool_limits(limits=1, user_api="blas")
    except Exception as exc:  # pragma: no cover - depends on BLAS flavor
        log.debug("could not limit BLAS threads: %s", exc)
        _limiter = False
