"""Counter-based pseudorandom primitives.

Every random quantity in the simulator is a pure function of a 64-bit seed
and an integer address, so evaluation order never matters and revisiting an
address always returns the same value. The mixer is splitmix64-style
finalization applied to the absorbed address words.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_GOLD = 0x9E3779B97F4A7C15


def _mix64(h: int) -> int:
    h &= _MASK
    h ^= h >> 30
    h = (h * _M1) & _MASK
    h ^= h >> 27
    h = (h * _M2) & _MASK
    h ^= h >> 31
    return h


def hash_words(seed: int, *words: int) -> int:
    """Absorb integer words into a 64-bit state; returns a mixed uint64."""
    h = _mix64((seed & _MASK) ^ _GOLD)
    for w in words:
        h = _mix64(h ^ ((w + _GOLD) & _MASK))
    return h


def uniform01(seed: int, *words: int) -> float:
    """Deterministic uniform in [0, 1) addressed by (seed, words)."""
    return (hash_words(seed, *words) >> 11) * 2.0**-53


def _mix64_vec(h: np.ndarray) -> np.ndarray:
    h = h.copy()
    h ^= h >> np.uint64(30)
    h *= np.uint64(_M1)
    h ^= h >> np.uint64(27)
    h *= np.uint64(_M2)
    h ^= h >> np.uint64(31)
    return h


def hash_words_vec(seed, words_fixed, j: np.ndarray) -> np.ndarray:
    """Vectorized hash: fixed prefix words, then one array word ``j``.

    ``seed`` may be a scalar or an array broadcastable against ``j``.
    """
    seed = np.asarray(seed, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64_vec(seed ^ np.uint64(_GOLD))
        for w in words_fixed:
            h = _mix64_vec(h ^ np.uint64((w + _GOLD) & _MASK))
        jj = np.asarray(j).astype(np.int64).view(np.uint64)
        h = _mix64_vec(h ^ (jj + np.uint64(_GOLD)))
    return h


def uniform01_vec(seed, words_fixed, j: np.ndarray) -> np.ndarray:
    h = hash_words_vec(seed, words_fixed, j)
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_rng(seed: int, *words: int) -> np.random.Generator:
    """A numpy Generator deterministically keyed by (seed, words)."""
    key = [hash_words(seed, *words, t) for t in range(4)]
    return np.random.Generator(np.random.PCG64(key))
