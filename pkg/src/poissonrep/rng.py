"""Counter-based randomness.

Every random decision is a pure function of ``(seed, stream, replica, key)``.
Keys for concrete sets are derived from the canonical shape and the offset of
the set, so the draw for a set does not depend on enumeration order.  Streams
keep independent roles (set inclusion, xi field, gates, ...) disjoint.
"""

import numpy as np

from . import kernels

STREAM_SETS = 1
STREAM_XI = 2
STREAM_COUPLING = 3
STREAM_GATES = 4
STREAM_NET = 5
STREAM_TIE = 6
STREAM_PHI = 7
STREAM_CENSOR = 8
STREAM_CHAIN = 9
STREAM_WITNESS = 10
STREAM_DIRECT = 11

_M = (1 << 64) - 1
_GOLD = 0x9E3779B97F4A7C15
_C = (0xBF58476D1CE4E5B9, 0x94D049BB133111EB, 0xD6E8FEB86659FD93)


def mix64(z: int) -> int:
    z = (z + _GOLD) & _M
    z = ((z ^ (z >> 30)) * _C[0]) & _M
    z = ((z ^ (z >> 27)) * _C[1]) & _M
    return z ^ (z >> 31)


def shape_hash(cells) -> int:
    h = mix64(len(cells))
    for c in cells:
        for x in c:
            h = mix64(h ^ (int(x) & _M))
        h = mix64(h ^ 0xA5A5A5A5)
    return h


def _vmix(z):
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLD)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_C[0])
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_C[1])
        return z ^ (z >> np.uint64(31))


def offset_keys(base: int, offsets) -> np.ndarray:
    """Keys for ``base`` combined with integer offset rows (shape ``K x d``)."""
    off = np.asarray(offsets, dtype=np.int64)
    if off.ndim == 1:
        off = off[:, None]
    h = np.full(off.shape[0], np.uint64(base & _M), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(off.shape[1]):
            h = _vmix(h ^ (off[:, j].astype(np.uint64) * np.uint64(_C[2])))
    return h


def site_keys(sites, tag: int = 0) -> np.ndarray:
    return offset_keys(mix64(0x5173 ^ tag), sites)


def uniforms(seed: int, stream: int, replicas, keys) -> np.ndarray:
    """Matrix of uniforms, one row per replica id, one column per key."""
    reps = np.atleast_1d(np.asarray(replicas, dtype=np.uint64))
    ks = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    return kernels.hash_uniforms(int(seed) & _M, int(stream), reps, ks)


def generator(seed: int, stream: int, replica: int = 0, *extra) -> np.random.Generator:
    """Sequential generator for algorithms that consume a variable number of draws."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & _M, int(stream), int(replica), *extra]))


def uniform_scalar(seed: int, stream: int, replica: int, key: int) -> float:
    """Single uniform equal to ``uniforms(seed, stream, [replica], [key])[0, 0]``."""
    base = mix64((int(seed) & _M) ^ ((int(stream) * _GOLD) & _M))
    hr = mix64((base + int(replica) * _C[0]) & _M)
    return (mix64(hr ^ (int(key) & _M)) >> 11) * (1.0 / 9007199254740992.0)


def key_of(*parts) -> int:
    """Stable 64-bit key from a tuple of integers."""
    h = mix64(0xC0DE)
    for x in parts:
        h = mix64(h ^ (int(x) & _M))
    return h


def offset_key(base: int, offset) -> int:
    """Scalar twin of :func:`offset_keys` for a single offset tuple."""
    h = base & _M
    for x in offset:
        h = mix64(h ^ (((int(x) & _M) * _C[2]) & _M))
    return h
