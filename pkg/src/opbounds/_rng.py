"""Counter-based random streams.

All randomness in the library is derived from ``substream(seed, *path)``:
a Philox generator keyed by the user seed and an integer path.  Entities that
could be generated in parallel (sketch rows, Monte-Carlo draw blocks) each get
their own path index, so results never depend on evaluation order or thread
count.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for (seed, path), stable across runs and schedules."""
    ss = np.random.SeedSequence(
        entropy=int(seed) & _MASK64, spawn_key=tuple(int(p) & _MASK64 for p in path)
    )
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, index: int) -> int:
    """Deterministic 64-bit child seed, used by the CLI to split a master seed."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
