"""Seedable, splittable random streams.

Every Monte Carlo trial draws from its own PCG64 stream keyed by
``(master_seed, trial_index)``, so results do not depend on how trials are
distributed over workers.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed=0) -> np.random.Generator:
    """Return a generator for an int seed or a ``(master_seed, index...)`` tuple."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        master, *key = (int(s) for s in seed)
        ss = np.random.SeedSequence(entropy=master, spawn_key=tuple(key))
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


def trial_rng(master_seed: int, trial: int, *sub: int) -> np.random.Generator:
    return make_rng((master_seed, trial, *sub))
