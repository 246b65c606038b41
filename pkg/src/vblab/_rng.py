"""Deterministic seed derivation for replicated experiments.

Per-replication streams are derived by mixing the master seed with the
experiment coordinates through splitmix64, so replications can run in any
order (or concurrently) and still reproduce bit-identical results.
"""

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 scrambling round of a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def derive_seed(master_seed: int, *coords: int) -> int:
    """Mix a master seed with integer coordinates into a stream seed.

    Successive coordinates are folded in with alternating splitmix64
    rounds; distinct (master_seed, coords) tuples map to distinct streams
    with overwhelming probability.
    """
    s = splitmix64(master_seed & _MASK)
    for c in coords:
        s = splitmix64((s ^ ((c & _MASK) * 0xD1342543DE82EF95)) & _MASK)
    return s


def generator(master_seed: int, *coords: int) -> np.random.Generator:
    """A numpy Generator seeded from the mixed (master_seed, coords) stream."""
    return np.random.default_rng(derive_seed(master_seed, *coords))
