"""Derived random streams and block-parallel execution.

Every random draw in the package comes from a Philox (counter-based)
generator keyed by ``(seed, tag, *indices)``.  Replicates are cut into
fixed-size blocks and each block owns its stream, so the numbers a block
sees never depend on how many workers process the blocks.  Results are
always reassembled in block order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterator, TypeVar

import numpy as np

T = TypeVar("T")

BLOCK_SIZE = 1 << 15

# stream tags, one per consumer; never reuse a value
BROWNIAN = 1
KOLMOGOROV = 2
PROBE = 3
TILTED = 4
TEST_POINTS = 5

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be in [0, 2**64), got {seed}")
    return seed


def stream(seed: int, tag: int, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, tag, *index)``."""
    ss = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(int(tag), *map(int, index)))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n: int, block_size: int = BLOCK_SIZE) -> Iterator[tuple[int, int, int]]:
    """Yield ``(block_index, start, stop)`` covering ``range(n)``."""
    for b, start in enumerate(range(0, n, block_size)):
        yield b, start, min(start + block_size, n)


def map_blocks(
    fn: Callable[[int, int, int], T],
    n: int,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> list[T]:
    """Apply ``fn(block, start, stop)`` to every block, results in block order."""
    spans = list(blocks(n, block_size))
    if workers is None or workers <= 1 or len(spans) <= 1:
        return [fn(*s) for s in spans]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(lambda s: fn(*s), spans))
