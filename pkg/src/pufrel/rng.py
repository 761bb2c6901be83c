"""Deterministic seeding: 64-bit avalanche mixing and named substreams.

Every stochastic component of the workbench draws from a numpy Generator
seeded through :func:`derive_seed`, so any record, repeat, or training run
is reproducible from the master seed plus a short index path, regardless
of execution order or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream tags keep independently consumed substreams of one master seed
# from colliding (e.g. record noise vs. training shuffles).
STREAM_RECORD = 0
STREAM_TRAIN = 1
STREAM_REFERENCE = 2
STREAM_CHALLENGE = 3


def splitmix64(x: int) -> int:
    """One splitmix64 avalanche round; bijective on 64-bit integers."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, *path: int) -> int:
    """Mix a master seed with an index path into a new 64-bit seed.

    Pure function of its arguments: the same (seed, path) always yields
    the same value, and unrelated paths yield unrelated streams.
    """
    s = splitmix64(seed & _MASK64)
    for index in path:
        s = splitmix64(s ^ splitmix64(index & _MASK64))
    return s


@dataclass(frozen=True)
class Rng:
    """A deterministic pseudo-random stream identified by a 64-bit seed."""

    seed: int

    def substream(self, *path: int) -> "Rng":
        """Child stream for an index path; pure function of (seed, path)."""
        return Rng(derive_seed(self.seed, *path))

    def generator(self) -> np.random.Generator:
        """Fresh numpy Generator positioned at the start of this stream."""
        return np.random.default_rng(self.seed & _MASK64)
