"""Per-replica random streams and deterministic replica-parallel execution.

Replica ``i`` of stream family ``tag`` under master seed ``s`` draws from

    numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(tag, i))))

``SeedSequence`` hashes (entropy, spawn_key) into the PCG64 state, so streams
depend only on these three integers and never on scheduling.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["replica_rng", "worker_count", "map_replicas"]


def replica_rng(seed: int, replica: int, tag: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(tag), int(replica)))
    return np.random.Generator(np.random.PCG64(ss))


def worker_count() -> int:
    raw = os.environ.get("WORKER_COUNT", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ValueError(f"WORKER_COUNT must be a positive integer, got {raw!r}") from None
        if value < 1:
            raise ValueError(f"WORKER_COUNT must be a positive integer, got {raw!r}")
        return value
    return os.cpu_count() or 1


def map_replicas(fn, reps: int, workers: int | None = None) -> None:
    """Call ``fn(lo, hi)`` over contiguous replica blocks covering ``range(reps)``.

    ``fn`` writes into caller-owned arrays indexed by replica, so the result
    never depends on the number of workers or on completion order.  Heavy work
    inside ``fn`` runs in nogil kernels, which is what makes threads useful.
    """
    workers = worker_count() if workers is None else workers
    if reps <= 0:
        return
    nblocks = min(reps, max(1, workers) * 4)
    edges = np.linspace(0, reps, nblocks + 1).astype(int)
    blocks = [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
    if workers <= 1 or len(blocks) == 1:
        for lo, hi in blocks:
            fn(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for fut in [pool.submit(fn, lo, hi) for lo, hi in blocks]:
            fut.result()
