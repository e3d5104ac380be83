"""Seed-stream derivation.

Every random draw in the package flows from one root seed through named
streams, so runs are bitwise reproducible and independent components never
share a stream.
"""

import hashlib

import numpy as np


def _token(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.blake2s(str(part).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def derive_rng(root_seed: int, *path) -> np.random.Generator:
    """Generator for the stream named by ``path`` under ``root_seed``.

    ``path`` mixes component names (strings) and indices (ints); the same
    (seed, path) always yields the same stream.
    """
    entropy = [int(root_seed) & 0xFFFFFFFF] + [_token(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
