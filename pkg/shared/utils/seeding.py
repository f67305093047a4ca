"""Hashed random streams.

Each stream is keyed by (seed, tag, index...) so that growing one subset of a
dataset never shifts the samples of another.
"""

import hashlib

import numpy as np


def stream_key(seed: int, *tags) -> int:
    digest = hashlib.blake2b(digest_size=16)
    digest.update(str(int(seed)).encode("utf-8"))
    for tag in tags:
        digest.update(b"\x1f")
        digest.update(str(tag).encode("utf-8"))
    return int.from_bytes(digest.digest(), "little")


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Independent generator for the stream (seed, *tags)"""
    return np.random.default_rng(stream_key(seed, *tags))
