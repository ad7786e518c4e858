"""Counter-based RNG stream derivation.

Every random draw in a run comes from a stream keyed by
``(seed, purpose, client, round)``. Keys are mixed with splitmix64 into a
64-bit seed for a numpy PCG64 generator, so turning a method flag on or off
never shifts the draws of an unrelated stream.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (state is advanced by the golden gamma first)."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, purpose: str, client: int = -1, round: int = -1) -> int:
    """Mix a stream key into a 64-bit seed.

    ``client`` and ``round`` default to -1 for streams that are not
    per-client or per-round.
    """
    h = splitmix64(seed & MASK64)
    for part in (fnv1a64(purpose.encode("utf-8")), client & MASK64, round & MASK64):
        h = splitmix64(h ^ part)
    return h


def stream(seed: int, purpose: str, client: int = -1, round: int = -1) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, purpose, client, round)))
