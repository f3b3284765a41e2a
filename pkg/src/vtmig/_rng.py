"""Counter-based seed fan-out.

Every random stream is addressed by ``(master_seed, *keys)``. Keys are hashed
to integers with CRC32 so that adding a new consumer never shifts the stream
another consumer already receives.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for the stream named by ``keys``."""
    return np.random.default_rng(seed_sequence(seed, *keys))


def derive_seed(seed: int, *keys) -> int:
    """A 32-bit integer seed for the stream named by ``keys``."""
    return int(seed_sequence(seed, *keys).generate_state(1)[0])
