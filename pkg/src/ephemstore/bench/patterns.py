"""Deterministic data patterns, addressable by (seed, path, absolute offset)."""

from __future__ import annotations

import hashlib

import numpy as np


def _key(seed: int, token: str, offset: int) -> int:
    digest = hashlib.blake2b(
        f"{seed}:{token}:{offset}".encode(), digest_size=16
    ).digest()
    return int.from_bytes(digest, "big")


def block(seed: int, token: str, offset: int, length: int) -> bytes:
    """Pseudorandom bytes for a block; reproducible from its address alone.

    Readers regenerate the expected content of [offset, offset+length) of a
    file (token) without knowing which worker wrote it, as long as they read
    on the same block boundaries it was written with.
    """
    if length == 0:
        return b""
    rng = np.random.Generator(np.random.PCG64(_key(seed, token, offset)))
    return rng.bytes(length)


def first_mismatch(expected: bytes, actual: bytes) -> int:
    """Index of the first differing byte; -1 when equal."""
    if expected == actual:
        return -1
    limit = min(len(expected), len(actual))
    lo, hi = 0, limit
    if expected[:limit] == actual[:limit]:
        return limit
    # binary search for the first differing prefix byte
    while lo < hi:
        mid = (lo + hi) // 2
        if expected[: mid + 1] == actual[: mid + 1]:
            lo = mid + 1
        else:
            hi = mid
    return lo
