"""Counter-based random streams addressed by (seed, purpose, instance index).

Every simulated instance owns a fixed-width slice of a Philox stream, so an
instance's uniforms depend only on the experiment seed, the purpose tags and
its index.  Blocks of instances can therefore be generated in any grouping
or on any worker and still replay bit-identically.
"""
from __future__ import annotations

import zlib

import numpy as np


def _tag_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(tag).encode())


def derive_key(seed: int, *tags) -> np.ndarray:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_int(t) for t in tags]
    return np.random.SeedSequence(entropy).generate_state(2, np.uint64)


def derive_rng(seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *tags)))


class InstanceStream:
    """Fixed-width uniform rows, one per instance index."""

    def __init__(self, seed: int, *tags, width: int):
        self.key = derive_key(seed, *tags)
        self.width = int(width)
        # Philox emits four 64-bit words per counter step.
        self._stride = max(4, -(-self.width // 4) * 4)

    def block(self, start: int, count: int) -> np.ndarray:
        bitgen = np.random.Philox(key=self.key)
        bitgen.advance(start * self._stride // 4)
        rows = np.random.Generator(bitgen).random((count, self._stride))
        return rows[:, : self.width]

    def row(self, index: int) -> np.ndarray:
        return self.block(index, 1)[0]
