"""Seeded random streams.

Every stochastic routine takes a seed (int or ``numpy.random.SeedSequence``)
and builds a PCG64 generator from it. Independent sub-streams are obtained
with ``SeedSequence.spawn``, so the k-th child of a given seed is the same
no matter how many other children are consumed or in which order; parallel
draws therefore reproduce serial ones.
"""

from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


def seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (bool, np.bool_)) or int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.SeedSequence(int(seed))


def make_rng(seed: SeedLike) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed)))


def child_seeds(seed: SeedLike, n: int) -> list[np.random.SeedSequence]:
    """The first ``n`` children of ``seed``.

    Uses a fresh copy of the sequence each call so repeated calls agree.
    """
    ss = seed_sequence(seed)
    fresh = np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key, pool_size=ss.pool_size)
    return fresh.spawn(n)


def child_seed(seed: SeedLike, k: int) -> np.random.SeedSequence:
    ss = seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (int(k),), pool_size=ss.pool_size)
