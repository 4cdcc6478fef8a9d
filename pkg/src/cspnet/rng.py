"""Deterministic random-stream derivation.

Every source of randomness in the package draws from a named substream of
one experiment seed, so a single integer pins synthesis, splits, weight
init, dropout and shuffling bit-for-bit.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *tags: object) -> np.random.Generator:
    """Return a Generator for the (seed, tags...) substream.

    Tags are hashed with crc32 so the derivation is stable across runs and
    platforms. Distinct tag tuples give statistically independent streams.
    """
    words = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF]
    for tag in tags:
        words.append(zlib.crc32(repr(tag).encode()) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(words))
