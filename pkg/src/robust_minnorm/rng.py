"""Portable synthetic returns: SplitMix64 driving Box-Muller.

The stream is fully specified so other implementations can reproduce atom
sets bit for bit:

* state starts at ``seed mod 2^64``; each draw adds ``0x9E3779B97F4A7C15``
  and mixes with the two SplitMix64 multiply-xorshift rounds;
* a uniform in ``(0, 1]`` is ``((x >> 11) + 1) * 2^-53``;
* normals come in pairs ``r cos t, r sin t`` with ``r = sqrt(-2 ln u1)``,
  ``t = 2 pi u2`` and are written row by row into the ``(n, d)`` sample.
"""
from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform draw in (0, 1]."""
        return ((self.next_u64() >> 11) + 1) * 2.0 ** -53

    def normals(self, count: int) -> np.ndarray:
        out = np.empty(count)
        i = 0
        while i < count:
            u1, u2 = self.uniform(), self.uniform()
            r = math.sqrt(-2.0 * math.log(u1))
            t = 2.0 * math.pi * u2
            out[i] = r * math.cos(t)
            if i + 1 < count:
                out[i + 1] = r * math.sin(t)
            i += 2
        return out


def gaussian_returns(n: int, d: int, seed: int, scales=None, drift=None, center: bool = True) -> np.ndarray:
    """``(n, d)`` sample: standard normals times per-asset ``scales``, optionally
    re-centred to zero sample mean, then shifted by ``drift``."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    x = SplitMix64(seed).normals(n * d).reshape(n, d)
    if scales is not None:
        x = x * np.broadcast_to(np.asarray(scales, dtype=float), (d,))
    if center:
        x = x - x.mean(axis=0)
    if drift is not None:
        x = x + np.broadcast_to(np.asarray(drift, dtype=float), (d,))
    return x
