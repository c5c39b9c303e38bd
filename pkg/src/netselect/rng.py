"""Seeded random streams.

Every stream is a Philox counter-based generator keyed by
``(master_seed, device_id, purpose)`` through :class:`numpy.random.SeedSequence`,
so adding or removing a consumer never perturbs another stream.  Draws are
served from a buffer because the learners ask for one number at a time.
"""
from __future__ import annotations

import numpy as np

DECISION = 0
DELAY = 1
ENVIRONMENT = 2

_BUFFER = 512


def make_generator(master_seed: int, device_id: int, purpose: int) -> np.random.Generator:
    seq = np.random.SeedSequence([int(master_seed), int(device_id), int(purpose)])
    return np.random.Generator(np.random.Philox(seq))


class UniformStream:
    """Buffered stream of uniforms on [0, 1) with a few scalar helpers."""

    __slots__ = ("generator", "_buf", "_pos")

    def __init__(self, generator: np.random.Generator):
        self.generator = generator
        self._buf: list = []
        self._pos = 0

    @classmethod
    def for_device(cls, master_seed: int, device_id: int, purpose: int = DECISION) -> "UniformStream":
        return cls(make_generator(master_seed, device_id, purpose))

    def random(self) -> float:
        pos = self._pos
        if pos >= len(self._buf):
            self._buf = self.generator.random(_BUFFER).tolist()
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def integers(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        return min(int(self.random() * n), n - 1)

    def categorical(self, probs) -> int:
        """Index drawn with the given probabilities (assumed to sum to 1)."""
        u = self.random()
        acc = 0.0
        last = len(probs) - 1
        for i in range(last):
            acc += probs[i]
            if u < acc:
                return i
        return last
