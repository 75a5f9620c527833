"""Per-path deterministic random streams for the numba kernels.

Each Monte Carlo path owns an independent xoshiro256++ stream whose state is
derived from (seed, path_index) through SplitMix64. Streams are created
inside nopython kernels, so results cannot depend on thread count or
scheduling: the same (seed, path) always reproduces the same draws.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["path_stream_u64", "path_stream_normals"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S64 = np.uint64(64)
_S11 = np.uint64(11)
_S17 = np.uint64(17)
_R23 = np.uint64(23)
_R45 = np.uint64(45)
_U0 = np.uint64(0)
_U1 = np.uint64(1)
# 2^-53; uniforms are (mantissa + 0.5) * 2^-53, strictly inside (0, 1)
_INV53 = 1.1102230246251565e-16
_TWO_PI = 6.283185307179586


@njit(cache=True, inline="always")
def _rotl(x, k):
    return np.uint64((x << k) | (x >> (_S64 - k)))


@njit(cache=True, inline="always")
def _splitmix(z):
    z = z + _GOLDEN
    t = z
    t = (t ^ (t >> _S30)) * _MIX1
    t = (t ^ (t >> _S27)) * _MIX2
    t = t ^ (t >> _S31)
    return z, t


@njit(cache=True, inline="always")
def stream_init(seed, path):
    z = np.uint64(seed) + np.uint64(path) * _GOLDEN
    z, s0 = _splitmix(z)
    z, s1 = _splitmix(z)
    z, s2 = _splitmix(z)
    z, s3 = _splitmix(z)
    if (s0 | s1 | s2 | s3) == _U0:
        s0 = _U1
    return s0, s1, s2, s3


@njit(cache=True, inline="always")
def stream_next(s0, s1, s2, s3):
    r = _rotl(s0 + s3, _R23) + s0
    t = s1 << _S17
    s2 = s2 ^ s0
    s3 = s3 ^ s1
    s1 = s1 ^ s2
    s0 = s0 ^ s3
    s2 = s2 ^ t
    s3 = _rotl(s3, _R45)
    return r, s0, s1, s2, s3


@njit(cache=True, inline="always")
def stream_uniform(s0, s1, s2, s3):
    r, s0, s1, s2, s3 = stream_next(s0, s1, s2, s3)
    u = (np.float64(r >> _S11) + 0.5) * _INV53
    return u, s0, s1, s2, s3


@njit(cache=True, inline="always")
def stream_normal_pair(s0, s1, s2, s3):
    u1, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
    u2, s0, s1, s2, s3 = stream_uniform(s0, s1, s2, s3)
    rad = math.sqrt(-2.0 * math.log(u1))
    ang = _TWO_PI * u2
    return rad * math.cos(ang), rad * math.sin(ang), s0, s1, s2, s3


@njit(cache=True)
def _fill_u64(seed, path, out):
    s0, s1, s2, s3 = stream_init(seed, path)
    for i in range(out.shape[0]):
        r, s0, s1, s2, s3 = stream_next(s0, s1, s2, s3)
        out[i] = r


@njit(cache=True)
def _fill_normals(seed, path, out):
    s0, s1, s2, s3 = stream_init(seed, path)
    i = 0
    while i < out.shape[0]:
        z0, z1, s0, s1, s2, s3 = stream_normal_pair(s0, s1, s2, s3)
        out[i] = z0
        if i + 1 < out.shape[0]:
            out[i + 1] = z1
        i += 2


def path_stream_u64(seed: int, path: int, n: int) -> np.ndarray:
    """First n raw 64-bit outputs of the (seed, path) stream."""
    out = np.empty(n, dtype=np.uint64)
    _fill_u64(np.uint64(seed), np.uint64(path), out)
    return out


def path_stream_normals(seed: int, path: int, n: int) -> np.ndarray:
    """First n standard normal draws of the (seed, path) stream."""
    out = np.empty(n, dtype=np.float64)
    _fill_normals(np.uint64(seed), np.uint64(path), out)
    return out
