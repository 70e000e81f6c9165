"""Seeded randomness with deterministic child derivation.

A RandomSource is a seed holder, not a live stream: ``generator()`` always
starts the same PCG64 stream for the same seed.  Concurrent consumers must
each receive their own child source, derived as
``child_seed = hash(parent_seed, child_index)`` via numpy's SeedSequence,
so results never depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALGORITHM = "pcg64"


@dataclass(frozen=True)
class RandomSource:
    seed: int
    algorithm: str = field(default=ALGORITHM)

    def __post_init__(self):
        if self.algorithm != ALGORITHM:
            raise ValueError(f"unsupported rng algorithm {self.algorithm!r}")
        object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    def generator(self) -> np.random.Generator:
        """Fresh generator seeded at this source's seed (same seed, same stream)."""
        return np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index: int) -> "RandomSource":
        """Independently seeded child source for parallel or staged consumers."""
        if index < 0:
            raise ValueError("child index must be non-negative")
        state = np.random.SeedSequence([self.seed, int(index)]).generate_state(1, np.uint64)
        return RandomSource(int(state[0]))
