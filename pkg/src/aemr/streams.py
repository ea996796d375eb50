"""Deterministic random-stream derivation.

Every source of randomness in the package flows from a single master seed.
Independent substreams are derived by extending a ``SeedSequence`` spawn
key with an explicit integer path, so a result never depends on execution
order, worker count, or how many unrelated draws happened earlier.

Conventions used by the rest of the package:

- ``(seed, k)``       -> Monte Carlo draw k of a randomization test
- ``(seed, r, 0)``    -> cohort generation for replication r
- ``(seed, r, 1)``    -> test draws for replication r
"""

from __future__ import annotations

from typing import Union

import numpy as np

Seed = Union[int, np.random.SeedSequence]


def derive(seed: Seed, *path: int) -> np.random.SeedSequence:
    """Extend a seed with an integer path, yielding an independent stream key.

    Arguments:
        seed: master integer seed or an already-derived ``SeedSequence``
        path: integers appended to the spawn key

    Returns:
        A ``SeedSequence`` unique to (seed, path).
    """
    if isinstance(seed, np.random.SeedSequence):
        base_entropy = seed.entropy
        base_key = tuple(seed.spawn_key)
    else:
        base_entropy = int(seed)
        base_key = ()
    return np.random.SeedSequence(entropy=base_entropy, spawn_key=base_key + tuple(int(p) for p in path))


def generator(seed: Seed, *path: int) -> np.random.Generator:
    """Return a PCG64 generator for the stream at (seed, path)."""
    return np.random.Generator(np.random.PCG64(derive(seed, *path)))
