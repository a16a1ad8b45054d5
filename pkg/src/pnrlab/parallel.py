"""Partitioned random streams for shot-parallel Monte Carlo.

Shots are cut into fixed-size blocks; block ``i`` always draws from the
stream spawned from ``(seed, i)``. The block layout does not depend on the
worker count, so results are identical for any ``workers``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

SCHEME_VERSION = 1
BLOCK_SHOTS = 1 << 16
_SEED_MASK = (1 << 64) - 1


def block_sizes(shots: int, block: int = BLOCK_SHOTS) -> list[int]:
    if shots < 0:
        raise ValueError("shots must be >= 0")
    full, rest = divmod(shots, block)
    return [block] * full + ([rest] if rest else [])


def block_rng(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & _SEED_MASK, spawn_key=(index,))
    return np.random.default_rng(ss)


def _run_one(args):
    fn, payload, seed, index, size = args
    return fn(payload, block_rng(seed, index), size)


def map_blocks(fn, payload, seed: int, shots: int, workers: int = 1) -> list:
    """Apply ``fn(payload, rng, size)`` to every shot block, in block order.

    ``fn`` must be a module-level function when ``workers > 1``.
    """
    tasks = [(fn, payload, seed, i, size) for i, size in enumerate(block_sizes(shots))]
    if workers <= 1 or len(tasks) <= 1:
        return [_run_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, tasks))


def manifest_info() -> dict:
    return {"scheme_version": SCHEME_VERSION, "block_shots": BLOCK_SHOTS}
