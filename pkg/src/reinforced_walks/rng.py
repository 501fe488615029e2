"""Counter-based random streams.

Every uniform is a pure function of ``(key, counter)``: the SplitMix64 output
at position ``counter`` of the sequence seeded with ``key``.  A replication's
key is derived from ``(master_seed, replication, domain)``, so any replication
can be regenerated alone and results do not depend on how work is split
across threads.  The compiled kernels implement the same arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TO_UNIT = 2.0**-53

# stream domains: keep walk draws, initial-law draws and graph growth independent
WALK = 1
INITIAL = 2
GRAPH = 3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=np.uint64))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def stream_key(master_seed: int, replication: int, domain: int = WALK) -> int:
    base = mix64((master_seed & MASK64) + domain * GOLDEN)
    return mix64(base + (replication + 1) * GOLDEN)


def stream_keys(master_seed: int, replications, domain: int = WALK) -> np.ndarray:
    reps = np.atleast_1d(np.asarray(replications, dtype=np.uint64))
    base = np.uint64(mix64((master_seed & MASK64) + domain * GOLDEN))
    return mix64_array(base + (reps + np.uint64(1)) * np.uint64(GOLDEN))


def unit_from_bits(bits: np.ndarray) -> np.ndarray:
    return (np.asarray(bits, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def uniforms(keys, counters) -> np.ndarray:
    """Uniforms in [0, 1) for broadcastable arrays of keys and counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    shape = np.broadcast_shapes(keys.shape, counters.shape)
    # 1-d views: numpy scalars warn on wrap-around, arrays wrap silently
    k = np.broadcast_to(keys, shape).reshape(-1)
    c = np.broadcast_to(counters, shape).reshape(-1)
    bits = mix64_array(k + (c + np.uint64(1)) * np.uint64(GOLDEN))
    return unit_from_bits(bits).reshape(shape)


@dataclass(frozen=True)
class RandomStream:
    """A keyed stream addressed by absolute counter position."""

    key: int

    @classmethod
    def for_replication(cls, master_seed: int, replication: int, domain: int = WALK) -> "RandomStream":
        return cls(stream_key(master_seed, replication, domain))

    def uniform(self, counter: int) -> float:
        return float(uniforms(self.key, counter)[()])

    def uniforms(self, start: int, count: int) -> np.ndarray:
        return uniforms(self.key, np.arange(start, start + count, dtype=np.uint64))
