"""Seeded random sources.

Two generators are used, both derived from one user seed:

* numpy ``PCG64`` streams seeded through ``SeedSequence([seed, tag])`` for
  sequential sampling (gaps, tie breaks, hash seeds);
* a counter-based splitmix64 hash, ``mix64(key, i)``, giving a uniform
  64-bit word for any slot index ``i`` without generating the slots before
  it. Alice's phases and the per-slot simulation kernel draw from it, so a
  phase can be looked up at slot 10**11 in O(1).
"""
from __future__ import annotations

import numpy as np

GENERATOR_NAME = "pcg64+seedsequence/splitmix64-counter"

# stream tags; values are part of the reproducibility contract
TAG_PHASE = 1
TAG_SIGNAL = 2
TAG_ERROR = 3
TAG_DARK1 = 4
TAG_DARK2 = 5
TAG_TIE = 6
TAG_SPARSE = 7
TAG_EVENT = 8
TAG_SAMPLE = 9
TAG_HASH = 10

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MUL1 = np.uint64(0xBF58476D1CE4E5B9)
MUL2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0 ** -53

MAX_SEED = 2 ** 64 - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def generator(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([check_seed(seed), tag])))


def stream_key(seed: int, tag: int) -> int:
    """64-bit key for the counter hash, as a Python int."""
    ss = np.random.SeedSequence([check_seed(seed), tag])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def mix64(key: int, counters) -> np.ndarray:
    """splitmix64 output for ``key`` at each counter value (vectorized)."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (c + np.uint64(1)) * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * MUL1
        z = (z ^ (z >> np.uint64(27))) * MUL2
    return z ^ (z >> np.uint64(31))


def uniform(key: int, counters) -> np.ndarray:
    return (mix64(key, counters) >> np.uint64(11)).astype(np.float64) * _TWO_M53


def bits(key: int, counters) -> np.ndarray:
    return (mix64(key, counters) >> np.uint64(63)).astype(np.uint8)
