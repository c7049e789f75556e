"""Seeded random streams that partition cleanly by name."""

import zlib

import numpy as np

from .errors import InvalidScale


class RngStream:
    """A named substream of a 64-bit seed.

    Each ``(seed, key)`` pair maps through numpy's SeedSequence key schedule
    to an independent PCG64 generator, so streams are reproducible across
    platforms and never depend on which thread consumes them.
    """

    def __init__(self, seed, key=()):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(seed, spawn_key=self.key))
        )
        self.draws = 0

    def child(self, name):
        """Independent substream identified by ``name``."""
        tag = zlib.crc32(str(name).encode()) if not isinstance(name, int) else name
        return RngStream(self.seed, self.key + (tag,))

    def normal(self, shape):
        out = self._gen.standard_normal(shape)
        self.draws += out.size
        return out

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key}, draws={self.draws})"


def gaussian_matrix(rng, rows, cols, scale):
    """Matrix with i.i.d. ``N(0, scale^2)`` entries drawn from ``rng``."""
    if not (np.isfinite(scale) and scale > 0):
        raise InvalidScale(f"scale must be positive, got {scale!r}")
    return scale * rng.normal((int(rows), int(cols)))
