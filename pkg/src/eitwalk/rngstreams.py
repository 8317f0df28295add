"""Keyed Philox4x64-10 streams.

A stream is addressed by ``StreamKey(seed, path_id, nest_level, nest_id)``.
The Philox key is ``(seed, path_id)`` and the 256-bit counter is
``(block, nest_id, nest_level, 0)``; only ``block`` advances, so streams with
distinct keys never share a counter/key pair. Block numbering starts at 1
(increment, then encrypt), which makes a stream equal to
``numpy.random.Philox(key=[seed, path_id], counter=[0, nest_id, nest_level, 0])``.

The compiled kernel carries a C copy of this generator; both must stay
bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

MASK64 = (1 << 64) - 1
_M0 = 0xD2E7470EE14C6C93
_M1 = 0xCA5A826395121157
_W0 = 0x9E3779B97F4A7C15
_W1 = 0xBB67AE8584CAA73B
_TWO_PI = 2.0 * math.pi
_INV53 = 1.0 / (1 << 53)

# nest levels in use
LEVEL_PATH = 0
LEVEL_NESTED = 1
LEVEL_MEDIUM = 2
LEVEL_START = 3  # shared start points when one start feeds several chains


def philox4x64(ctr, key):
    """Ten-round Philox4x64 block function on Python ints."""
    c0, c1, c2, c3 = ctr
    k0, k1 = key
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            ((p1 >> 64) ^ c1 ^ k0) & MASK64,
            p1 & MASK64,
            ((p0 >> 64) ^ c3 ^ k1) & MASK64,
            p0 & MASK64,
        )
        k0 = (k0 + _W0) & MASK64
        k1 = (k1 + _W1) & MASK64
    return c0, c1, c2, c3


@dataclass(frozen=True)
class StreamKey:
    seed: int
    path_id: int
    nest_level: int = LEVEL_PATH
    nest_id: int = 0

    def __post_init__(self):
        for name in ("seed", "path_id", "nest_id", "nest_level"):
            v = getattr(self, name)
            if not 0 <= v <= MASK64:
                raise ValueError(f"{name}={v} does not fit in 64 bits")


class Stream:
    """Sequential reader over one keyed Philox stream."""

    __slots__ = ("_key", "_c1", "_c2", "_block", "_buf", "_idx")

    def __init__(self, key: StreamKey):
        self._key = (key.seed & MASK64, key.path_id & MASK64)
        self._c1 = key.nest_id
        self._c2 = key.nest_level
        self._block = 0
        self._buf = (0, 0, 0, 0)
        self._idx = 4

    def next_u64(self) -> int:
        if self._idx == 4:
            self._block += 1
            self._buf = philox4x64((self._block, self._c1, self._c2, 0), self._key)
            self._idx = 0
        v = self._buf[self._idx]
        self._idx += 1
        return v

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def isotropic_unit_vector(self) -> tuple[float, float]:
        a = _TWO_PI * self.uniform()
        return math.cos(a), math.sin(a)


def derive(key: StreamKey) -> Stream:
    return Stream(key)


def uniform(s: Stream) -> float:
    return s.uniform()


def isotropic_unit_vector(s: Stream) -> tuple[float, float]:
    return s.isotropic_unit_vector()


def path_stream(seed: int, path_id: int) -> Stream:
    return Stream(StreamKey(seed, path_id))


def nested_stream(seed: int, path_id: int, nest_id: int) -> Stream:
    return Stream(StreamKey(seed, path_id, LEVEL_NESTED, nest_id))


def medium_stream(seed: int, path_id: int) -> Stream:
    return Stream(StreamKey(seed, path_id, LEVEL_MEDIUM, 0))


def start_stream(seed: int, group_id: int) -> Stream:
    return Stream(StreamKey(seed, group_id, LEVEL_START, 0))
