"""Deterministic per-frame random streams.

Streams derive from (seed, context...) through SHA-256, so the processing
order of frames, workers, or epochs never changes any frame's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(seed: int, *context) -> np.random.Generator:
    """Generator keyed by the seed plus any hashable context tokens."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for token in context:
        h.update(b"\x1f")
        h.update(str(token).encode())
    entropy = int.from_bytes(h.digest(), "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
