"""Named, seedable counter-based random streams.

Every stochastic step draws from ``stream(seed, *names)``: a Philox generator
keyed by the seed and a stable hash of the names, so two call sites never
share a stream and no call depends on how many draws another one made.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

SEED_ENV = "GZRD_SEED"


def _name_key(name) -> int:
    return zlib.crc32(str(name).encode("utf-8"))


def stream(seed: int, *names) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFF, *(_name_key(n) for n in names)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def child_seed(seed: int, *names) -> int:
    """A derived integer seed, for handing to APIs that take a plain seed."""
    return int(stream(seed, "child-seed", *names).integers(0, 2**31 - 1))


def default_seed(fallback: int = 0) -> int:
    value = os.environ.get(SEED_ENV)
    return int(value) if value not in (None, "") else fallback
