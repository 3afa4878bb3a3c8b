"""Seeded random streams for reproducible simulation.

Every task draws from its own stream, derived from the run seed and a tuple of
integer keys, so results do not depend on scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np

RandomStream = np.random.Generator


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed: int, *keys: int | str) -> RandomStream:
    """Independent generator for (seed, keys...)"""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(_key(k) for k in keys)]
    return np.random.default_rng(np.random.SeedSequence(entropy))
