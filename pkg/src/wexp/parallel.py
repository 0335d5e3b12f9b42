"""Deterministic block-parallel map over replication indices."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 256


def worker_count() -> int:
    raw = os.environ.get("WEXP_THREADS", "")
    try:
        k = int(raw)
    except ValueError:
        k = os.cpu_count() or 1
    return max(1, k)


def map_blocks(fn, reps: int, start: int = 0, block: int = BLOCK, workers: int | None = None):
    """Apply ``fn(rep_indices)`` to fixed-size blocks and concatenate in order.

    Block boundaries depend only on ``reps`` and ``block``, and every
    replication draws from its own stream, so the result is identical for
    any number of workers. ``fn`` may return an array or a tuple/dict of
    arrays with the block as leading axis.
    """
    blocks = [np.arange(s, min(s + block, start + reps)) for s in range(start, start + reps, block)]
    workers = worker_count() if workers is None else workers
    if workers == 1 or len(blocks) == 1:
        parts = [fn(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, blocks))
    if not parts:
        return np.empty(0)
    first = parts[0]
    if isinstance(first, dict):
        return {k: np.concatenate([p[k] for p in parts]) for k in first}
    if isinstance(first, tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(first)))
    return np.concatenate(parts)
