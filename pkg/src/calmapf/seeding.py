"""Named random sub-streams derived from one master seed."""
from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str, *extra: int) -> int:
    """Return a 64-bit seed for the stream ``name`` under ``seed``.

    The derivation is stable across processes and Python versions, so a
    component can be re-seeded in isolation by recomputing its stream.
    """
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(e) for e in extra)
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_for(seed: int, name: str, *extra: int) -> np.random.Generator:
    return np.random.default_rng(substream(seed, name, *extra))
