"""Worker-count policy, seed derivation, and an order-preserving thread map."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "BCPLAB_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Number of worker threads, capped by ``BCPLAB_THREADS`` when set."""
    available = os.cpu_count() or 1
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            available = max(1, min(available, int(cap)))
        except ValueError:
            pass
    if requested is not None:
        return max(1, min(int(requested), available))
    return available


def derive_seed(seed: int, *keys: int | str) -> int:
    """Deterministic 63-bit child seed for ``(seed, *keys)``."""
    material = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            material.extend(key.encode())
        else:
            material.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(material).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = None) -> List[R]:
    """``list(map(fn, items))``, optionally across threads; order is preserved."""
    items = list(items)
    workers = worker_count(workers)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
