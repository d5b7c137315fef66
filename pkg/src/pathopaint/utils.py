"""Small shared helpers: stable seeding and array checks."""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Derive a reproducible 63-bit seed from arbitrary parts.

    Python's builtin ``hash`` is salted per process, so seeds derived for
    parallel or resumed work go through blake2s instead.
    """
    h = hashlib.blake2s()
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest()[:8], "little") & (2**63 - 1)


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept either an integer seed or an existing Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def is_binary(arr: np.ndarray) -> bool:
    """True when every entry is 0 or 1 (any integer or float dtype)."""
    return bool(np.isin(arr, (0, 1)).all())
