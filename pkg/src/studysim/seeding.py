"""Deterministic seeding utilities shared across the toolkit.

All randomness flows from named integer seeds through SplitMix64-style
mixing, so per-user, per-tree and per-episode streams stay reproducible
independent of evaluation order. The compiled kernels reimplement the
same constants; tests pin both sides against each other.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_COMB = 0xC2B2AE3D27D4EB4F


def mix64(value: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit integer."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def splitmix_at(seed: int, index: int) -> int:
    """The index-th draw of the SplitMix64 stream started at ``seed``."""
    return mix64((seed + (index + 1) * GOLDEN) & MASK64)


def mix_seed(a: int, b: int) -> int:
    """Derive a child seed from a parent seed and a stream label."""
    return mix64(((a & MASK64) * GOLDEN + (b & MASK64) * _COMB + 1) & MASK64)


def token_hash(token: str) -> int:
    """Stable 64-bit hash of a string id, for per-user substreams."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def generator(*entropy: int) -> np.random.Generator:
    """Seeded PCG64 generator; the entropy tuple names the stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(entropy))))


def uniform_indices(seed: int, count: int, upper: int) -> np.ndarray:
    """``count`` draws in [0, upper) from the SplitMix64 stream at ``seed``.

    Vectorized but draw-for-draw identical to splitmix_at(seed, i) % upper.
    """
    if upper <= 0:
        raise ValueError("upper must be positive")
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(seed & MASK64) + idx * np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    z = z ^ (z >> np.uint64(31))
    return (z % np.uint64(upper)).astype(np.int64)
