"""Deterministic RNG derivation: one base seed fans out to independent,
reproducible streams keyed by purpose tags."""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def rng_for(seed: int, *tags) -> np.random.Generator:
    """A PCG64 generator keyed by (seed, tags). Stable across runs and platforms."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
