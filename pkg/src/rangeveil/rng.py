"""Randomness source shared by every component.

All randomness in the library flows through a RandomSource so that a
simulation run is reproducible from a single seed.  A seeded source is a
wrapper over random.Random; named child streams let each actor draw from
an independent deterministic stream.  An unseeded source delegates to the
OS CSPRNG and is what real deployments would use.
"""

from __future__ import annotations

import random
from typing import Optional, Sequence


class RandomSource:
    def __init__(self, rng: random.Random, seed_material: Optional[str] = None):
        self._rng = rng
        self._seed_material = seed_material

    @classmethod
    def seeded(cls, seed: int | str) -> "RandomSource":
        material = str(seed)
        return cls(random.Random(material), material)

    @classmethod
    def system(cls) -> "RandomSource":
        return cls(random.SystemRandom(), None)

    @property
    def deterministic(self) -> bool:
        return self._seed_material is not None

    def child(self, name: str) -> "RandomSource":
        """Derive an independent stream; deterministic iff the parent is."""
        if self._seed_material is None:
            return RandomSource.system()
        return RandomSource.seeded(f"{self._seed_material}/{name}")

    def randbits(self, k: int) -> int:
        return self._rng.getrandbits(k)

    def randbytes(self, n: int) -> bytes:
        return self._rng.getrandbits(n * 8).to_bytes(n, "big") if n else b""

    def randrange(self, start: int, stop: Optional[int] = None) -> int:
        return self._rng.randrange(start, stop)

    def randint(self, a: int, b: int) -> int:
        return self._rng.randint(a, b)

    def random(self) -> float:
        return self._rng.random()

    def choice(self, seq: Sequence):
        return self._rng.choice(seq)

    def sample(self, seq: Sequence, k: int) -> list:
        return self._rng.sample(seq, k)

    def shuffle(self, items: list) -> None:
        self._rng.shuffle(items)

    def getstate(self):
        if self._seed_material is None:
            raise ValueError("system randomness has no capturable state")
        return (self._seed_material, self._rng.getstate())

    def setstate(self, state) -> None:
        self._seed_material, rng_state = state
        self._rng = random.Random()
        self._rng.setstate(rng_state)

    def __getstate__(self):
        return self.getstate()

    def __setstate__(self, state):
        self.setstate(state)
