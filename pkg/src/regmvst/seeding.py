"""Seed derivation tree: every random stream is ``derive_seed(root, component, index...)``.

Components are small integer tags so results never depend on thread
scheduling or on how work is split across workers.
"""

import numpy as np

SIMULATE = 1
INIT = 2
SYNC_COIN = 3
DELAY = 4
BOOTSTRAP = 5
RESTART = 6
INFO_DRAWS = 7


def derive_seed(root, *path):
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFF, *[int(p) for p in path]])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)


def rng_for(root, *path):
    return np.random.default_rng(derive_seed(root, *path))
