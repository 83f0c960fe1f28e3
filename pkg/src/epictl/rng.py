"""Counter-based random numbers (Philox4x32-10).

Every draw is a pure function of ``(seed, counter)``, so a replicate's noise
does not depend on which worker ran it or in what order. Counter layout used
throughout the package::

    c0 = step / update index
    c1, c2 = low / high 32 bits of the replicate index
    c3 = (stream << 16) | block

``stream`` separates independent consumers (SDE noise, network draws, ...),
``block`` enumerates successive 4-word outputs within one (step, replicate).
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import njit

MASK32 = 0xFFFFFFFF
_M0 = 0xD2511F53
_M1 = 0xCD9E8D57
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_ROUNDS = 10

STREAM_SDE = 0
STREAM_NETWORK = 1
STREAM_ER = 2
STREAM_LEVELS = 3

_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0
_INV_2_32 = 1.0 / 4294967296.0


def split_seed(seed: int) -> tuple[int, int]:
    seed = int(seed)
    if seed < 0 or seed >= 1 << 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed & MASK32, seed >> 32


# ---------------------------------------------------------------- numpy path

def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """Vectorised Philox4x32-10. Inputs broadcast; returns four uint64 arrays
    holding 32-bit words."""
    m32 = np.uint64(MASK32)
    c0, c1, c2, c3 = np.broadcast_arrays(
        *(np.asarray(c, dtype=np.uint64) & m32 for c in (c0, c1, c2, c3))
    )
    c0, c1, c2, c3 = (c.copy() for c in (c0, c1, c2, c3))
    k0 = np.uint64(k0 & MASK32)
    k1 = np.uint64(k1 & MASK32)
    m0 = np.uint64(_M0)
    m1 = np.uint64(_M1)
    s32 = np.uint64(32)
    for r in range(_ROUNDS):
        if r > 0:
            k0 = np.uint64((int(k0) + _W0) & MASK32)
            k1 = np.uint64((int(k1) + _W1) & MASK32)
        p0 = m0 * c0
        p1 = m1 * c2
        hi0, lo0 = p0 >> s32, p0 & m32
        hi1, lo1 = p1 >> s32, p1 & m32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _words_to_normals(w0, w1, w2, w3):
    x1 = ((w0 >> np.uint64(5)) << np.uint64(26)) | (w1 >> np.uint64(6))
    x2 = ((w2 >> np.uint64(5)) << np.uint64(26)) | (w3 >> np.uint64(6))
    u1 = (x1.astype(np.float64) + 0.5) * _INV_2_53
    u2 = x2.astype(np.float64) * _INV_2_53
    rad = np.sqrt(-2.0 * np.log(u1))
    return rad * np.cos(_TWO_PI * u2), rad * np.sin(_TWO_PI * u2)


def normals(seed: int, replicate, step, n_components: int = 4, stream: int = STREAM_SDE) -> np.ndarray:
    """Standard normals keyed by (seed, replicate, step, component).

    ``replicate`` and ``step`` broadcast against each other; the result has
    their broadcast shape plus a trailing axis of length ``n_components``.
    """
    k0, k1 = split_seed(seed)
    rep = np.asarray(replicate, dtype=np.uint64)
    stp = np.asarray(step, dtype=np.uint64)
    rep, stp = np.broadcast_arrays(rep, stp)
    out = np.empty(rep.shape + (n_components,), dtype=np.float64)
    rep_lo = rep & np.uint64(MASK32)
    rep_hi = rep >> np.uint64(32)
    for block in range((n_components + 1) // 2):
        c3 = (stream << 16) | block
        z0, z1 = _words_to_normals(*philox4x32(stp, rep_lo, rep_hi, c3, k0, k1))
        out[..., 2 * block] = z0
        if 2 * block + 1 < n_components:
            out[..., 2 * block + 1] = z1
    return out


def uniforms(seed: int, index, sub=0, stream: int = STREAM_NETWORK) -> np.ndarray:
    """Four 32-bit-resolution uniforms in (0, 1) per ``(index, sub)`` counter."""
    k0, k1 = split_seed(seed)
    idx = np.asarray(index, dtype=np.uint64)
    sub = np.asarray(sub, dtype=np.uint64)
    idx, sub = np.broadcast_arrays(idx, sub)
    words = philox4x32(idx, sub & np.uint64(MASK32), sub >> np.uint64(32), stream << 16, k0, k1)
    return np.stack([(w.astype(np.float64) + 0.5) * _INV_2_32 for w in words], axis=-1)


# ---------------------------------------------------------------- numba path

@njit(cache=True)
def philox4x32_scalar(c0, c1, c2, c3, k0, k1):
    m32 = np.uint64(0xFFFFFFFF)
    s32 = np.uint64(32)
    m0 = np.uint64(0xD2511F53)
    m1 = np.uint64(0xCD9E8D57)
    w0 = np.uint64(0x9E3779B9)
    w1 = np.uint64(0xBB67AE85)
    c0 = np.uint64(c0) & m32
    c1 = np.uint64(c1) & m32
    c2 = np.uint64(c2) & m32
    c3 = np.uint64(c3) & m32
    k0 = np.uint64(k0) & m32
    k1 = np.uint64(k1) & m32
    for r in range(10):
        if r > 0:
            k0 = (k0 + w0) & m32
            k1 = (k1 + w1) & m32
        p0 = m0 * c0
        p1 = m1 * c2
        hi0 = p0 >> s32
        lo0 = p0 & m32
        hi1 = p1 >> s32
        lo1 = p1 & m32
        n0 = hi1 ^ c1 ^ k0
        n2 = hi0 ^ c3 ^ k1
        c0 = n0
        c1 = lo1
        c2 = n2
        c3 = lo0
    return c0, c1, c2, c3


@njit(cache=True)
def normal_pair_scalar(k0, k1, step, replicate, block, stream):
    """Two normals for one (step, replicate, block) counter; numba twin of
    :func:`normals`."""
    rep = np.uint64(replicate)
    c3 = (np.uint64(stream) << np.uint64(16)) | np.uint64(block)
    w0, w1, w2, w3 = philox4x32_scalar(np.uint64(step), rep & np.uint64(0xFFFFFFFF),
                                       rep >> np.uint64(32), c3, k0, k1)
    x1 = ((w0 >> np.uint64(5)) << np.uint64(26)) | (w1 >> np.uint64(6))
    x2 = ((w2 >> np.uint64(5)) << np.uint64(26)) | (w3 >> np.uint64(6))
    u1 = (np.float64(x1) + 0.5) * (1.0 / 9007199254740992.0)
    u2 = np.float64(x2) * (1.0 / 9007199254740992.0)
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    return rad * np.cos(ang), rad * np.sin(ang)


@njit(cache=True)
def uniforms_scalar(k0, k1, index, sub, stream):
    s = np.uint64(sub)
    w0, w1, w2, w3 = philox4x32_scalar(np.uint64(index), s & np.uint64(0xFFFFFFFF),
                                       s >> np.uint64(32), np.uint64(stream) << np.uint64(16), k0, k1)
    scale = 1.0 / 4294967296.0
    return ((np.float64(w0) + 0.5) * scale, (np.float64(w1) + 0.5) * scale,
            (np.float64(w2) + 0.5) * scale, (np.float64(w3) + 0.5) * scale)
