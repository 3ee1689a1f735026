from collections.abc import Callable, Iterable, Iterator
from concurrent.futures import ProcessPoolExecutor
from typing import TypeVar

import numpy as np

PRNG_ALGORITHM = "PCG64"

T = TypeVar("T")
R = TypeVar("R")


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a child 64-bit seed from ``seed`` and an integer path of ``keys``.

    The derivation is ``SeedSequence(seed, spawn_key=keys)`` reduced to its first
    64-bit state word, so it is stable across runs, processes and worker counts.
    """
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def derive_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent PCG64 stream for ``(seed, *keys)``."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(keys)))
    )


def ordered_map(
    fn: Callable[[T], R], items: Iterable[T], workers: int = 1
) -> Iterator[R]:
    """Map ``fn`` over ``items``, yielding results in input order.

    With ``workers > 1`` the calls run in a process pool; ``fn`` and the items
    must then be picklable.
    """
    if workers <= 1:
        yield from map(fn, items)
        return

    with ProcessPoolExecutor(max_workers=workers) as executor:
        yield from executor.map(fn, items)
