"""Seed derivation.

All randomness flows through :func:`generator`, which maps a master seed
plus a tuple of stream keys to an independent Philox stream. Streams are
addressed by name and index rather than drawn sequentially, so a
replication's random numbers do not depend on how work is scheduled.
"""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MAX = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _key(k: int | str) -> int:
    if isinstance(k, str):
        return int.from_bytes(hashlib.blake2b(k.encode(), digest_size=8).digest(), "little")
    return int(k)


def generator(seed: int, *keys: int | str) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def keyed_hash(seed: int, label: str) -> int:
    """Stable 64-bit hash of ``label`` keyed by ``seed``; platform independent."""
    h = hashlib.blake2b(label.encode(), digest_size=8, key=check_seed(seed).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")
