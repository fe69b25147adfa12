"""Seed derivation.

Every random stream in the package comes from a Philox counter-based
generator keyed by a tuple of integers, so results never depend on the order
in which independent units of work are executed.
"""
import zlib

import numpy as np


def mix(*keys):
    """Derive a 64-bit seed from a tuple of non-negative integers."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(*keys):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


def name_key(name):
    """Stable integer key for a string (used to seed per-strategy streams)."""
    return zlib.crc32(name.encode("utf-8"))
