"""Seeded random streams.

Every random draw in the package goes through :func:`make_rng`, which keys a
Philox counter-based generator on ``(seed, *keys)``. Philox output depends only
on the key and counter, so streams are reproducible across platforms and any
sub-task (a sample, a fold, an epoch) can derive its own independent stream.
"""

import numpy as np


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
