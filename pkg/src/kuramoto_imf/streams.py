"""Reproducible random streams.

Every random draw in the package comes from a generator keyed by
``(master seed, purpose tag, index, ...)``. The key goes into the spawn key of
a :class:`numpy.random.SeedSequence`, which feeds a counter-based Philox bit
generator, so a trial's stream does not depend on which worker runs it or in
what order.
"""
from __future__ import annotations

import zlib

import numpy as np

MAX_SEED = 2**64 - 1


def tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, *index: int) -> np.random.Generator:
    """Return the generator for purpose ``tag`` and integer ``index`` path."""
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    key = (tag_id(tag),) + tuple(int(i) for i in index)
    if any(k < 0 for k in key):
        raise ValueError(f"stream indices must be nonnegative, got {index}")
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
