"""Seeded, splittable random streams.

All randomness derives from one integer seed; independent sub-streams are
addressed by integer keys and backed by the counter-based Philox generator,
so results do not depend on call order across streams.
"""

import numpy as np


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
