"""Named deterministic random streams derived from one master seed.

Each pipeline stage pulls its own stream (init, shuffle, restarts, ...) so
stages are reproducible independently of each other.
"""

from __future__ import annotations

import zlib

import numpy as np


def named_stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))
