"""Counter-based keyed random streams.

Every random draw in the package is produced by a generator keyed by
``(seed, tag, index)``.  Streams are independent of evaluation order and of
the number of worker threads, so parallel code paths reproduce the exact
bit stream of the sequential ones.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_int(tag: str) -> int:
    digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def keyed_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator for the stream keyed by (seed, tag, index).

    Backed by Philox, a counter-based bit generator; distinct keys give
    statistically independent streams.
    """
    entropy = [int(seed) & _MASK64, _tag_int(tag), int(index) & _MASK64]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, tag: str, index: int = 0) -> int:
    """Stable 63-bit child seed for (seed, tag, index), e.g. per-repeat seeds."""
    payload = f"{int(seed)}:{tag}:{int(index)}".encode("utf-8")
    digest = hashlib.blake2s(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1
