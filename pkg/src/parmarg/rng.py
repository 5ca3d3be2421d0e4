"""Deterministic random substreams derived from one root seed.

Every consumer (a level's sweep, a level's swap proposals, the swap schedule,
the baseline chain) owns a Philox stream keyed by ``(role, level)``. A stream is
consumed only by its owner and always in the same order, so results do not
depend on how work is scheduled.
"""
from __future__ import annotations

import enum

import numpy as np


class Role(enum.IntEnum):
    SWEEP = 0
    SWAP = 1
    SCHEDULE = 2
    INIT = 3
    BASELINE = 4


def substream(seed: int, role: Role, level: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(role), int(level)))
    return np.random.Generator(np.random.Philox(ss))


class StreamBank:
    """Lazily created substreams for one run."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[tuple[int, int], np.random.Generator] = {}

    def get(self, role: Role, level: int = 0) -> np.random.Generator:
        key = (int(role), int(level))
        if key not in self._streams:
            self._streams[key] = substream(self.seed, role, level)
        return self._streams[key]


# Counter-based draws for compiled kernels: value j of a stream is the
# SplitMix64 finalizer applied to ``key + (j + 1) * golden_gamma``.

import numba  # noqa: E402

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def counter_uniform(key, j):
    """Uniform on [0, 1) for draw ``j`` of stream ``key`` (53-bit resolution)."""
    return (_mix(key + np.uint64(j + 1) * _GAMMA) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(inline="always")
def counter_normal(key, j):
    """Standard normal number ``j``: normals ``2p`` and ``2p + 1`` are the two
    Box-Muller outputs of uniforms ``2p`` and ``2p + 1``."""
    p = j // 2
    u1 = 1.0 - counter_uniform(key, 2 * p)
    u2 = counter_uniform(key, 2 * p + 1)
    r = np.sqrt(-2.0 * np.log(u1))
    if j % 2 == 0:
        return r * np.cos(_TWO_PI * u2)
    return r * np.sin(_TWO_PI * u2)


@numba.njit
def counter_normals(key, start, n):
    """``n`` consecutive standard normals from index ``start`` (``start`` even)."""
    out = np.empty(n)
    for p in range(0, n, 2):
        u1 = 1.0 - counter_uniform(key, start + p)
        u2 = counter_uniform(key, start + p + 1)
        r = np.sqrt(-2.0 * np.log(u1))
        out[p] = r * np.cos(_TWO_PI * u2)
        if p + 1 < n:
            out[p + 1] = r * np.sin(_TWO_PI * u2)
    return out


def draw_key(rng: np.random.Generator) -> np.uint64:
    """Fresh 64-bit stream key taken from a substream."""
    return np.uint64(rng.integers(0, 2**64, dtype=np.uint64))
