"""Process-level parallel map with deterministic, index-addressed results.

Workers receive the payload once (at pool start) and compute results purely
from (payload, index), so output is identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable

THREADS_ENV_VAR = "TARGETMETA_THREADS"

_WORKER_FN: Callable[[Any, int], Any] | None = None
_WORKER_PAYLOAD: Any = None


def resolve_threads(requested: int | None = None) -> int:
    """Explicit request wins, then the environment override, then core count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _init_worker(fn, payload) -> None:
    global _WORKER_FN, _WORKER_PAYLOAD
    _WORKER_FN = fn
    _WORKER_PAYLOAD = payload
    try:  # keep BLAS single-threaded inside workers to avoid oversubscription
        from threadpoolctl import threadpool_limits

        threadpool_limits(1)
    except ImportError:
        pass


def _run_index(index: int):
    return _WORKER_FN(_WORKER_PAYLOAD, index)


def indexed_map(fn: Callable[[Any, int], Any], payload, n_tasks: int, threads: int) -> list:
    """Evaluate ``fn(payload, i)`` for i in range(n_tasks), in index order."""
    if threads <= 1 or n_tasks <= 1:
        return [fn(payload, i) for i in range(n_tasks)]
    workers = min(threads, n_tasks)
    chunk = max(1, n_tasks // (workers * 8))
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(fn, payload)
    ) as pool:
        return list(pool.map(_run_index, range(n_tasks), chunksize=chunk))
