"""Seeded random streams.

Every stochastic routine takes an integer seed and builds its generator here,
so that runs are reproducible and sub-streams (replicates, epochs, pools) can
be derived without sharing state.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"seed components must be non-negative, got {part}")
    return int(part)


def make_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Counter-based generator for ``seed`` and an optional derivation path.

    ``make_rng(7, "replicate", 3)`` always yields the same stream, independent
    of how many other streams were derived from seed 7 before it.
    """
    ss = np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int | str) -> int:
    """A non-negative integer seed for a named sub-task of ``seed``."""
    return int(make_rng(seed, "derive", *keys).integers(0, 2**31 - 1))
