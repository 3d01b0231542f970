"""Stable seed derivation so per-scene randomness is independent of
iteration order and reproducible across processes.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *tags) -> int:
    """64-bit mix of a master seed and arbitrary hashable tags."""
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((int(master),) + tuple(str(t) for t in tags)).encode())
    return int.from_bytes(h.digest(), "little")
