"""Seeded, purpose-keyed random streams.

Every random draw in the library comes from a generator obtained here, keyed
by (seed, purpose, index...). Streams are independent, so adding a consumer
never shifts the draws of another.
"""

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, *key) -> np.random.Generator:
    """Return a fresh Generator for (seed, *key); same arguments, same draws."""
    entropy = (int(seed),) + tuple(_key_to_int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))
