"""Seeded random streams.

Every stochastic routine takes an explicit integer seed. Streams are built on
numpy's Philox-4x64 counter-based bit generator, keyed through a SeedSequence
of ``(seed, *stream)`` so independent sub-streams (per manifest entry, per
mesh, ...) never depend on evaluation order or thread count.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    key = [int(seed) & MASK64] + [int(s) & MASK64 for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
