"""Seed derivation.

Every random stream is a PCG64 generator seeded with
``derive_seed(master, index, tag)``, where the mixing is SplitMix64 applied
in sequence to the master seed, the index and a 64-bit FNV-1a hash of the tag.
The mapping is part of the output contract: changing it changes every result.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def fnv1a64(tag: str) -> int:
    h = 0xCBF29CE484222325
    for byte in tag.encode():
        h ^= byte
        h = (h * 0x100000001B3) & _MASK
    return h


def derive_seed(master: int, index: int = 0, tag: str = "") -> int:
    h = splitmix64(master & _MASK)
    h = splitmix64(h ^ (index & _MASK))
    return splitmix64(h ^ fnv1a64(tag))


def make_rng(master: int, index: int = 0, tag: str = "") -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, index, tag)))
