"""Named, reproducible random substreams: one generator per (seed, label)."""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, label: str) -> np.random.Generator:
    digest = hashlib.blake2b(label.encode(), digest_size=16).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *words])
    return np.random.Generator(np.random.PCG64(ss))
