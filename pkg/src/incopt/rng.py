"""Seeded random streams.

Streams come from the counter-based Philox bit generator keyed by
``SeedSequence([seed, *tags])``; string tags are mapped to integers with CRC32
so every consumer (instance data, outliers, x0, shuffles) gets an independent,
reproducible stream.  Gaussian draws go through the inverse normal CDF applied
to open-interval uniforms so the transform is fixed and documented.
"""

import zlib

import numpy as np
from scipy.special import ndtri


def _tag(t):
    if isinstance(t, str):
        return zlib.crc32(t.encode())
    return int(t)


class Stream:
    def __init__(self, seed, *tags):
        ss = np.random.SeedSequence([int(seed), *(_tag(t) for t in tags)])
        self._gen = np.random.Generator(np.random.Philox(ss))

    def random(self, size=None):
        return self._gen.random(size)

    def standard_normal(self, size=None):
        # shift by half an ulp-step so u lies strictly inside (0, 1)
        u = self._gen.random(size) + 2.0 ** -54
        return ndtri(u)

    def permutation(self, m):
        return self._gen.permutation(m)

    def integers(self, high, size=None):
        return self._gen.integers(0, high, size=size)


def make_rng(seed, *tags) -> Stream:
    return Stream(seed, *tags)
