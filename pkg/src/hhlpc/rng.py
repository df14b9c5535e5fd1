"""Counter-based, splittable random streams.

Every simulation instance owns one Philox stream. Instance seeds are derived
from an experiment master seed plus integer keys through ``SeedSequence``, so
any stream can be regenerated on its own and never overlaps its siblings.
"""

from __future__ import annotations

import numpy as np


def derive_seed(master: int, *keys: int) -> int:
    """Deterministic 63-bit seed for (master, key0, key1, ...)."""
    ss = np.random.SeedSequence([int(master), *[int(k) for k in keys]])
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
