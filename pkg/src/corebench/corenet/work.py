"""Deterministic synthetic service work."""
from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output step; a bijection on 64-bit integers."""
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(payload: bytes, rounds: int) -> bytes:
    """Fold ``payload`` into a 64-bit state and stir it ``rounds`` times.

    Pure-Python on purpose: the loop must hold the interpreter lock so that an
    in-process stress worker competes with it.
    """
    h = int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")
    for _ in range(rounds):
        h = (h + GOLDEN) & MASK64
        z = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        h ^= z ^ (z >> 31)
    return h.to_bytes(8, "big")
