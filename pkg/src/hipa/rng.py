"""Deterministic pseudo-random numbers for init, cropping and augmentation.

xoshiro256** with splitmix64 seeding. The 32-byte state serializes into
checkpoints, and independent streams are derived from (seed, stream) so the
init stream and the data-sampling stream never interleave.
"""

from __future__ import annotations

import struct

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next state, output)."""
    x = (x + _GOLDEN) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256(object):
    """xoshiro256** generator, splittable by stream id.

    Two generators with the same seed but different streams produce
    independent sequences; the same (seed, stream) always reproduces the
    same sequence bit-for-bit.
    """

    STATE_BYTES = 32

    def __init__(self, seed: int, stream: int = 0):
        x = (int(seed) ^ ((int(stream) * _GOLDEN) & _MASK64)) & _MASK64
        s = []
        for _ in range(4):
            x, out = _splitmix64(x)
            s.append(out)
        if not any(s):  # all-zero state is a fixed point; unreachable in practice
            s[0] = _GOLDEN
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform float64 in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0 ** -53

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def uniform(self, low: float, high: float, shape=(), dtype=np.float32) -> np.ndarray:
        """Array of uniforms in [low, high)."""
        count = int(np.prod(shape)) if shape else 1
        span = high - low
        # local bindings keep the tight loop cheap for large parameter inits
        rand = self.random
        vals = [low + span * rand() for _ in range(count)]
        arr = np.asarray(vals, dtype=dtype)
        return arr.reshape(shape) if shape else arr[0]

    @property
    def state(self) -> tuple[int, int, int, int]:
        return tuple(self._s)

    @state.setter
    def state(self, value) -> None:
        s = [int(v) & _MASK64 for v in value]
        if len(s) != 4 or not any(s):
            raise ValueError("xoshiro256 state must be four nonzero-together u64 words")
        self._s = s

    def state_bytes(self) -> bytes:
        return struct.pack("<4Q", *self._s)

    def set_state_bytes(self, raw: bytes) -> None:
        if len(raw) != self.STATE_BYTES:
            raise ValueError(f"expected {self.STATE_BYTES} state bytes, got {len(raw)}")
        self.state = struct.unpack("<4Q", raw)
