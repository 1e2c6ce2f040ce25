"""Seeded child streams and replication fan-out.

Replication ``r`` of cell ``key`` always draws from the generator seeded by
``(master_seed, crc32(key), r)``, so results do not depend on which worker
runs a replication or in what order.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, Sequence

import numpy as np


def cell_hash(key: Any) -> int:
    return zlib.crc32(repr(key).encode("utf-8"))


def child_rng(master_seed: int, key: Any = None, replication: int = 0) -> np.random.Generator:
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, cell_hash(key), int(replication)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _call(args):
    fn, item = args
    return fn(item)


def run_replications(fn: Callable[[Any], Any], items: Sequence[Any] | Iterable[Any],
                     workers: int = 1, chunksize: int = 8) -> list:
    """Map ``fn`` over ``items`` preserving order.

    With ``workers > 1`` the calls run in a process pool; ``fn`` and the items
    must be picklable.  Output order is the input order either way.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, [(fn, it) for it in items], chunksize=chunksize))
