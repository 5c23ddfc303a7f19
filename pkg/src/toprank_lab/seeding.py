"""Seed derivation.

Stream ``k`` under master seed ``s`` is ``numpy.random.default_rng([s, k])``,
so any episode or trial can be replayed on its own without running the ones
before it.
"""

import numpy as np


def stream(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(k)])


def streams(seed: int, ks) -> list[np.random.Generator]:
    return [stream(seed, k) for k in ks]
