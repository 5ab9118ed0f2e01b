"""Reproducible per-trial seeds.

Trial k of a run seeded with s uses ``s XOR mix64(k)``, where mix64 is the
SplitMix64 finalizer applied to k + golden-ratio increment. Adjacent trial
indices land far apart in seed space, and the mapping is fixed forever.
"""
from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(seed: int, k: int) -> int:
    return (seed & MASK64) ^ mix64(k)
