"""Replicate fan-out.

Results are keyed by replicate index and merged in index order, and every
replicate draws from its own (seed, r) stream, so outputs are identical for
any worker count. NF_THREADS caps the pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = int(os.environ.get("NF_THREADS", "1"))
    return max(1, int(workers))


def run_replicates(fn, n: int, workers=None) -> list:
    """[fn(0), ..., fn(n-1)], optionally computed in a process pool.

    fn must be picklable (a top-level function or functools.partial over
    one) when workers > 1.
    """
    workers = resolve_workers(workers)
    if workers <= 1 or n <= 1:
        return [fn(r) for r in range(n)]
    chunk = max(1, n // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(n), chunksize=chunk))
