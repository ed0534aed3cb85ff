"""Counter-based random streams.

Every stream is a Philox4x64-10 generator keyed by the pair ``(seed, stream)``
(the 128-bit key is ``[seed, stream]`` as two unsigned 64-bit words, counter
starting at zero).  Philox uses the published round constants
``M0 = 0xD2E7470EE14C6C93``, ``M1 = 0xCA5A826395121157`` and Weyl increments
``W0 = 0x9E3779B97F4A7C15``, ``W1 = 0xBB67AE8584CAA73B``.  A uniform double is
``(x >> 11) * 2**-53`` for each successive 64-bit output ``x``, so a stream can
be reproduced bit-for-bit in any language with a Philox implementation.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_BLOCK = 512


class RandomStream:
    """Reproducible uniform draws for one (seed, stream id) pair."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self._buf = np.empty(0)
        self._pos = 0
        self.counter = 0

    def uniform(self) -> float:
        """Next uniform double in [0, 1)."""
        if self._pos >= self._buf.size:
            self._buf = self._gen.random(_BLOCK)
            self._pos = 0
        u = float(self._buf[self._pos])
        self._pos += 1
        self.counter += 1
        return u

    def uniforms(self, n: int) -> np.ndarray:
        return np.array([self.uniform() for _ in range(n)])

    def integer(self, n: int) -> int:
        """Uniform integer in ``range(n)`` from a single draw."""
        return min(int(self.uniform() * n), n - 1)

    def spawn(self, stream: int) -> "RandomStream":
        """Independent stream sharing this seed."""
        return RandomStream(self.seed, stream)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream={self.stream}, counter={self.counter})"
