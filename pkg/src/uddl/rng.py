"""Seeded random-number plumbing.

All randomness in the package flows from a single 64-bit seed through
counter-based Philox streams keyed by a stage path, so any stage can be
replayed in isolation and results never depend on call order.
"""

import numpy as np


def generator(seed: int, *key: int) -> np.random.Generator:
    """Return the Philox stream for stage ``key`` under ``seed``.

    The same (seed, key) pair always yields an identical stream; distinct
    keys yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key) into a plain integer seed for APIs that take one."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
