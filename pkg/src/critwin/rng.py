"""Counter-based random streams shared by every simulator in the package.

The generator is SplitMix64 (Steele, Lea & Flood 2014; Vigna's reference
``splitmix64.c``): the state is a 64-bit counter advanced by the golden-ratio
increment and every output is the fmix64-style finalizer of the counter.
Because the output is a pure function of (key, counter), streams can be
derived for any tuple of integers without coordination, which is what the
shared-uniform graph mode and the per-replication Monte Carlo streams rely on.

Pinned derivations (all arithmetic modulo 2**64):

* ``mix64(z)``: ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27;
  z *= 0x94D049BB133111EB; z ^= z >> 31``
* ``next_u64(state)``: ``state += 0x9E3779B97F4A7C15; return mix64(state)``
* ``derive(key, x) = mix64(key ^ mix64(x + 0x9E3779B97F4A7C15))``
* ``root_key(seed) = mix64(seed)``
* unit uniforms use the top 53 bits: ``((z >> 11) + 0.5) * 2**-53`` which
  lies strictly inside (0, 1).
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


# -- pure-Python reference (used for key derivation and as a test oracle) --

def mix64_py(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_py(key: int, x: int) -> int:
    return mix64_py((key ^ mix64_py((x + GOLDEN) & MASK64)) & MASK64)


def root_key(seed: int) -> int:
    if seed < 0:
        raise ValueError("seeds are unsigned 64-bit integers")
    return mix64_py(seed & MASK64)


def splitmix64_sequence(state: int, count: int) -> list[int]:
    """Reference SplitMix64 outputs starting from a raw state."""
    out = []
    for _ in range(count):
        state = (state + GOLDEN) & MASK64
        out.append(mix64_py(state))
    return out


# -- numba kernels --

@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _U_M1
    z = (z ^ (z >> _S27)) * _U_M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def derive(key, x):
    return mix64(key ^ mix64(np.uint64(x) + _U_GOLDEN))


@njit(cache=True, inline="always")
def to_unit(z):
    return (np.float64(z >> _S11) + 0.5) * _INV53


@njit(cache=True, inline="always")
def next_u64(state):
    state[0] += _U_GOLDEN
    return mix64(state[0])


@njit(cache=True, inline="always")
def uniform(state):
    return to_unit(next_u64(state))


@njit(cache=True, inline="always")
def exponential(state):
    return -np.log(uniform(state))


@njit(cache=True, inline="always")
def laplace(state):
    # Exp(1) - Exp(1) is exactly Laplace(1)
    return -np.log(uniform(state)) + np.log(uniform(state))


@njit(cache=True)
def pair_uniform(key, i, j):
    return to_unit(derive(derive(key, i), j))


class Stream:
    """A SplitMix64 stream identified by a 64-bit key.

    ``Stream(seed)`` is the root stream of a seed; ``spawn(*ids)`` derives an
    independent child keyed by the ids. The mutable ``state`` array is what
    the numba kernels advance in place.
    """

    __slots__ = ("key", "state")

    def __init__(self, seed: int, *, _key: int | None = None):
        self.key = root_key(seed) if _key is None else _key
        self.state = np.array([self.key], dtype=np.uint64)

    def spawn(self, *ids: int) -> "Stream":
        key = self.key
        for x in ids:
            key = derive_py(key, int(x) & MASK64)
        return Stream(0, _key=key)

    def uniform(self) -> float:
        return float(uniform(self.state))

    def __repr__(self) -> str:
        return f"Stream(key=0x{self.key:016x})"


def as_stream(rng) -> Stream:
    if isinstance(rng, Stream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Stream(int(rng))
    raise TypeError(f"expected Stream or integer seed, got {type(rng).__name__}")
