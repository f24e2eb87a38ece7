"""Seed handling.

All randomness in the package flows from a single user seed through named
substreams, so individual stages (init, dropout, splits, balancing) are
reproducible independently of each other.
"""

import hashlib

import numpy as np


def substream_rng(seed: int, name: str) -> np.random.Generator:
    """Generator for the named substream of ``seed``.

    The substream salt is a stable hash of the name (sha256, not the
    process-salted builtin ``hash``), so streams are identical across runs
    and platforms.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    salt = int.from_bytes(digest[:8], "little")
    return np.random.default_rng([int(seed) % (1 << 63), salt])
