"""Deterministic seed derivation and RNG construction.

Every stochastic routine in the package takes an explicit numpy Generator;
nothing reads global RNG state or the wall clock. Per-item child streams
are derived with a SplitMix64 finalizer of (seed XOR item index), so batch
work can be fanned out in any order without changing any output.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 finalizer step on a 64-bit value."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def derive_seed(seed: int, index: int) -> int:
    """Child seed for item `index` of a batch keyed by `seed`."""
    return splitmix64((int(seed) ^ int(index)) & _MASK64)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
