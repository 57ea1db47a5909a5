"""Deterministic, splittable random streams.

Every stochastic step in the package (key generation, encryption noise,
tree growth, resampling) draws from an :class:`RngHandle`.  Handles are
keyed by ``(seed, path)`` where ``path`` is a tuple of integers derived
from labels such as ``("tree", 3)``, so two machines that start from the
same seed reproduce identical streams without talking to each other.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("substream labels must be non-negative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


class RngHandle:
    """Counter-based (Philox) generator with named substreams.

    Not thread safe: derive one substream per concurrent task instead of
    sharing a handle.
    """

    def __init__(self, seed: int, path: tuple = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.path = tuple(int(p) for p in path)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def substream(self, *labels) -> "RngHandle":
        """Independent child stream; does not advance this handle."""
        return RngHandle(self.seed, self.path + tuple(_tag(x) for x in labels))

    def __repr__(self):
        return f"RngHandle(seed={self.seed}, path={self.path})"

    # thin conveniences over numpy.random.Generator
    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def random(self, size=None):
        return self.generator.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def bytes(self, n: int) -> bytes:
        return self.generator.bytes(n)

    def randbelow(self, bound: int, size: int) -> list:
        """``size`` uniform integers in ``[0, bound)`` for arbitrary-precision bound."""
        if bound < 1:
            raise ValueError("bound must be positive")
        if bound <= 2**62:
            return [int(x) for x in self.generator.integers(0, bound, size=size)]
        nbits = (bound - 1).bit_length()
        nbytes = (nbits + 7) // 8
        mask = (1 << nbits) - 1
        out = []
        while len(out) < size:
            need = size - len(out)
            buf = self.generator.bytes(need * nbytes)
            for i in range(need):
                v = int.from_bytes(buf[i * nbytes:(i + 1) * nbytes], "little") & mask
                if v < bound:
                    out.append(v)
        return out
