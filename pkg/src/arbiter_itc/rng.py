"""Counter-based random stream shared by sponsors who must reproduce each other's draws.

The stream is numpy's Philox4x64-10 bit generator keyed directly by the
64-bit seed (key = [seed, 0]) with the counter's top word holding a stream
index. Only raw 64-bit outputs are consumed; the conversion to uniforms
(top 53 bits, offset by half an ulp so 0 and 1 never occur) and to normals
(inverse CDF) is done here so that no version-dependent sampler is involved.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

GENERATOR_ID = "philox4x64-10"
_TWO53 = 2.0 ** -53


class CounterRNG:
    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self.stream = int(stream)
        self._bits = np.random.Philox(key=seed, counter=[0, 0, 0, self.stream])

    def raw(self, n: int) -> np.ndarray:
        return np.asarray(self._bits.random_raw(n), dtype=np.uint64)

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in the open interval (0, 1)."""
        return ((self.raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO53

    def normal(self, n: int) -> np.ndarray:
        return ndtri(self.uniform(n))

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")
