"""Seedable, splittable random streams.

A ``RandomStream`` wraps a PCG64 generator seeded through a
``SeedSequence``.  Splitting spawns child sequences: substreams are
statistically independent, carry a deterministic identity (the spawn
key), and reproduce bit-for-bit from the same root seed.
"""

from __future__ import annotations

import numpy as np


class RandomStream:
    """Reproducible random source; one per logical sampling task."""

    def __init__(self, seed, _seq: np.random.SeedSequence | None = None):
        if _seq is not None:
            self._seq = _seq
        else:
            self._seq = np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    @property
    def seed_entropy(self):
        return self._seq.entropy

    @property
    def spawn_key(self) -> tuple:
        return tuple(self._seq.spawn_key)

    def split(self, k: int) -> list["RandomStream"]:
        """k independent substreams with disjoint deterministic identities."""
        return [RandomStream(None, _seq=child) for child in self._seq.spawn(k)]

    def child(self) -> "RandomStream":
        return self.split(1)[0]

    def __repr__(self) -> str:
        return f"RandomStream(entropy={self.seed_entropy}, spawn_key={self.spawn_key})"
