"""Counter-based Gaussian streams.

A standard normal is a pure function of ``(seed, trial, block, step, coord)``:
a chain of splitmix64 finalizers hashes the counter, two 53-bit uniforms are
derived from the hash, and Box-Muller (cosine branch) maps them to a normal.
Trials can therefore be simulated in any order or split across workers.
"""
from __future__ import annotations

import math

import numpy as np

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
M1 = 0xBF58476D1CE4E5B9
M2 = 0x94D049BB133111EB
TWO_M53 = 2.0**-53

#: Channel offsets for ``coord = channel * 2**16 + component``.
PROCESS, MEASUREMENT, INIT_STATE, INIT_ESTIMATE = 0, 1, 2, 3
CHANNEL_SHIFT = 16


def coord(channel: int, component: int) -> int:
    return (channel << CHANNEL_SHIFT) + component


def mix(z: int) -> int:
    z = (z + GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * M1) & MASK
    z = ((z ^ (z >> 27)) * M2) & MASK
    return z ^ (z >> 31)


def prefix(seed: int, trial: int, block: int, step: int) -> int:
    h = mix(seed & MASK)
    h = mix(h ^ trial)
    h = mix(h ^ block)
    return mix(h ^ step)


def normal(seed: int, trial: int, block: int, step: int, c: int) -> float:
    """Reference scalar implementation."""
    r1 = mix(prefix(seed, trial, block, step) ^ c)
    r2 = mix(r1)
    u1 = ((r1 >> 11) + 0.5) * TWO_M53
    u2 = (r2 >> 11) * TWO_M53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def uniform(seed: int, trial: int, block: int, step: int, c: int) -> float:
    """Uniform on [0, 1) from the same counter layout."""
    return (mix(prefix(seed, trial, block, step) ^ c) >> 11) * TWO_M53


# ------------------------------------------------------------ vectorized
_G = np.uint64(GOLDEN)
_M1 = np.uint64(M1)
_M2 = np.uint64(M2)
_S30, _S27, _S31, _S11 = np.uint64(30), np.uint64(27), np.uint64(31), np.uint64(11)


def mix_array(z: np.ndarray) -> np.ndarray:
    z = z + _G
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def prefix_array(seed: int, trials: np.ndarray, blocks: np.ndarray, step: int) -> np.ndarray:
    """Hash prefixes of shape ``(len(trials), len(blocks))``."""
    h0 = np.uint64(mix(seed & MASK))
    ht = mix_array(np.asarray(trials, dtype=np.uint64) ^ h0)
    hb = mix_array(ht[:, None] ^ np.asarray(blocks, dtype=np.uint64)[None, :])
    return mix_array(hb ^ np.uint64(step))


def normals_from_prefix(pref: np.ndarray, coords: np.ndarray) -> np.ndarray:
    r1 = mix_array(pref ^ np.asarray(coords, dtype=np.uint64))
    r2 = mix_array(r1)
    u1 = ((r1 >> _S11).astype(np.float64) + 0.5) * TWO_M53
    u2 = (r2 >> _S11).astype(np.float64) * TWO_M53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def uniforms_from_prefix(pref: np.ndarray, coords: np.ndarray) -> np.ndarray:
    r1 = mix_array(pref ^ np.asarray(coords, dtype=np.uint64))
    return (r1 >> _S11).astype(np.float64) * TWO_M53


def normals(seed: int, trials, step: int, blocks, coords) -> np.ndarray:
    """Normals for every trial (rows) and every ``(blocks[j], coords[j])`` column."""
    blocks = np.asarray(blocks, dtype=np.int64)
    ub, inv = np.unique(blocks, return_inverse=True)
    pref = prefix_array(seed, np.asarray(trials), ub, step)
    with np.errstate(over="ignore"):
        return normals_from_prefix(pref[:, inv], coords)


def uniforms(seed: int, trials, step: int, blocks, coords) -> np.ndarray:
    blocks = np.asarray(blocks, dtype=np.int64)
    ub, inv = np.unique(blocks, return_inverse=True)
    pref = prefix_array(seed, np.asarray(trials), ub, step)
    return uniforms_from_prefix(pref[:, inv], coords)
