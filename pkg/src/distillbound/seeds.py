"""Named RNG substreams derived from one root seed.

Every command takes a single seed; independent consumers (init, data,
mc-teacher, per-trial draws) get their own generator keyed by a stable string
so adding a consumer never shifts another one's stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Generator for (seed, name, index). Stable across runs and platforms."""
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(index)))
    return np.random.default_rng(ss)
