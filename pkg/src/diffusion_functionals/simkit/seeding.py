"""Per-path seeds and deterministic block dispatch."""

from __future__ import annotations

import logging
from typing import Callable, List, Sequence, TypeVar

import numpy as np
from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

T = TypeVar("T")

# streams keep the independent samples of one check apart
STREAM_DIFFUSION = 0
STREAM_BROWNIAN = 1
STREAM_BESSEL = 2
STREAM_SQUARED_BESSEL = 3
STREAM_SCALING = 4
STREAM_FUBINI = 5
STREAM_BRIDGE = 6
STREAM_LOCAL_TIME = 7


def path_seed(master_seed: int, index: int, stream: int = STREAM_DIFFUSION) -> int:
    """First 64-bit word of SeedSequence(master_seed, spawn_key=(stream, index))."""

    sequence = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(index)))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def path_seeds(master_seed: int, n_paths: int, stream: int = STREAM_DIFFUSION) -> List[int]:
    return [path_seed(master_seed, i, stream) for i in range(n_paths)]


def run_blocks(
    task: Callable[[Sequence[int]], List[T]],
    n_items: int,
    block_size: int,
    threads: int = 1,
) -> List[T]:
    """Run ``task`` over fixed index blocks and reassemble results by index.

    Block boundaries depend only on ``block_size``, so the worker count
    never changes what each block computes.
    """

    if block_size < 1:
        raise ValueError("block_size must be positive")
    blocks = [list(range(i, min(i + block_size, n_items))) for i in range(0, n_items, block_size)]
    if threads <= 1 or len(blocks) <= 1:
        results = [task(block) for block in blocks]
    else:
        results = Parallel(n_jobs=threads, prefer="threads")(
            delayed(task)(block) for block in blocks
        )
    logger.debug("run_blocks items=%s blocks=%s threads=%s", n_items, len(blocks), threads)
    return [item for block in results for item in block]


__all__ = [
    "STREAM_BESSEL",
    "STREAM_BRIDGE",
    "STREAM_BROWNIAN",
    "STREAM_DIFFUSION",
    "STREAM_FUBINI",
    "STREAM_LOCAL_TIME",
    "STREAM_SCALING",
    "STREAM_SQUARED_BESSEL",
    "path_seed",
    "path_seeds",
    "run_blocks",
]
