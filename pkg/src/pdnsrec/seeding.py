"""Seed derivation for independent RNG streams.

Every stream (shuffle, sampling, split, ...) gets its own 64-bit seed derived
from the master seed with a splitmix64 chain, so adding a stream or a worker
never perturbs the others.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

STREAM_SPLIT = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_SAMPLE = 4
STREAM_DISCLOSE = 5


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """``splitmix64(... splitmix64(splitmix64(master) ^ k0) ^ k1 ...)``."""
    x = splitmix64(int(master) & _MASK)
    for key in keys:
        x = splitmix64(x ^ (int(key) & _MASK))
    return x


def stream(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
