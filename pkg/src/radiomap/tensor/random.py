"""Counter-based random stream.

Each draw builds a fresh Philox generator keyed by ``seed`` with the current
``counter`` as its block counter, then bumps the counter. The value sequence is
therefore a pure function of (seed, number of draws so far), independent of
platform and of how large earlier draws were.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


class RandomStream:
    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter) & _MASK64

    def _generator(self) -> np.random.Generator:
        # counter occupies the top word; low words are consumed by the draw itself
        bitgen = np.random.Philox(key=self.seed, counter=np.array([0, 0, 0, self.counter], dtype=np.uint64))
        self.counter = (self.counter + 1) & _MASK64
        return np.random.Generator(bitgen)

    def random(self, shape) -> np.ndarray:
        """Uniform float64 values in [0, 1)."""
        return self._generator().random(shape)

    def uniform(self, low: float, high: float, shape=None):
        return self._generator().uniform(low, high, shape)

    def integers(self, low: int, high: int, shape=None):
        """Integers in [low, high)."""
        return self._generator().integers(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator().permutation(n)

    def choice(self, options, shape=None):
        options = list(options)
        idx = self._generator().integers(0, len(options), shape)
        if shape is None:
            return options[int(idx)]
        return [options[int(i)] for i in np.ravel(idx)]

    def spawn(self, tag: int) -> "RandomStream":
        """Independent child stream; consumes one draw from this stream."""
        key = int(self._generator().integers(0, 2**63)) ^ (int(tag) * 0x9E3779B97F4A7C15)
        return RandomStream(key & _MASK64)

    def state(self) -> dict:
        return {"seed": self.seed, "counter": self.counter}

    @classmethod
    def from_state(cls, state: dict) -> "RandomStream":
        return cls(state["seed"], state["counter"])

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, counter={self.counter})"
