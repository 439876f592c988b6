"""Counter-based RNG stream derivation.

Every random stream is a function of ``(master_seed, *keys)`` only, so the
result of a trial never depends on which worker ran it or in what order.
"""

from __future__ import annotations

import numpy as np


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(master_seed, *keys)``."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    entropy.extend(int(k) for k in keys)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
