"""Deterministic, splittable random streams.

Stream ``(seed, *key)`` is a Philox counter-based generator keyed by the
seed-sequence spawn key, so replicate ``r`` of a study gets the same numbers
no matter which worker runs it or in what order.
"""

import numpy as np

__all__ = ["stream"]


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
