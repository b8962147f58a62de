"""Counter-based random streams (Philox4x64-10) shared by both kernel backends.

Every random quantity is a pure function of ``(seed, counter)``, so a path can
be regenerated in isolation and results do not depend on scheduling. Counter
layout, as four 64-bit words:

* ``(block, path, 0, 0)``: Gaussian increments; block ``k >> 2`` feeds steps
  ``4*(k >> 2) .. 4*(k >> 2) + 3``.
* ``(block, path, 0, 1)``: uniforms for the Brownian-bridge crossing test,
  blocked like the increments.
* ``(0, index, stream, 0)`` with ``stream >= 1``: uniforms for initial states
  (stream 1 is the simulator's initial draw) and other one-off samples.

The compiled kernel implements the same arithmetic in C; this module is both
the pure-Python reference and the generator used by the fallback backend.
"""
from __future__ import annotations

import numpy as np

M0 = 0xD2E7470EE14C6C93
M1 = 0xCA5A826395121157
W0 = 0x9E3779B97F4A7C15
W1 = 0xBB67AE8584CAA73B
ROUNDS = 10
MASK64 = (1 << 64) - 1

_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
TWO_PI = 6.283185307179586
INV_2_53 = 2.0 ** -53

INCREMENT_STREAM = 0
INITIAL_STREAM = 1


def seed_key(seed: int) -> tuple[int, int]:
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return seed & MASK64, (seed >> 64) & MASK64


def _mulhilo(a: np.ndarray, b: int):
    bb = np.uint64(b)
    a0 = a & _MASK32
    a1 = a >> _S32
    b0 = bb & _MASK32
    b1 = bb >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _MASK32) + (p10 & _MASK32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, a * bb


def philox4x64(c0, c1, c2, c3, k0: int, k1: int):
    """Vectorized Philox4x64-10 bijection; counters are broadcast uint64 arrays."""
    c0, c1, c2, c3 = (np.atleast_1d(np.asarray(c, dtype=np.uint64)) for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    for r in range(ROUNDS):
        ka = np.uint64((k0 + r * W0) & MASK64)
        kb = np.uint64((k1 + r * W1) & MASK64)
        hi0, lo0 = _mulhilo(c0, M0)
        hi1, lo1 = _mulhilo(c2, M1)
        c0, c1, c2, c3 = hi1 ^ c1 ^ ka, lo1, hi0 ^ c3 ^ kb, lo0
    return c0, c1, c2, c3


def bits_to_unit(r: np.ndarray) -> np.ndarray:
    """53-bit uniform on [0, 1)."""
    return (r >> _S11).astype(np.float64) * INV_2_53


def bits_to_open_unit(r: np.ndarray) -> np.ndarray:
    """53-bit uniform on (0, 1]; safe under ``log``."""
    return ((r >> _S11) + _ONE).astype(np.float64) * INV_2_53


def box_muller(ra: np.ndarray, rb: np.ndarray):
    u1 = bits_to_open_unit(ra)
    u2 = bits_to_unit(rb)
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = TWO_PI * u2
    return rad * np.cos(ang), rad * np.sin(ang)


def normal_block(seed: int, block: int, paths: np.ndarray) -> np.ndarray:
    """Four standard normals per path for the given block; shape ``(len(paths), 4)``."""
    k0, k1 = seed_key(seed)
    r0, r1, r2, r3 = philox4x64(np.uint64(block), np.asarray(paths, dtype=np.uint64), 0, 0, k0, k1)
    z0, z1 = box_muller(r0, r1)
    z2, z3 = box_muller(r2, r3)
    return np.stack([z0, z1, z2, z3], axis=1)


def bridge_block(seed: int, block: int, paths: np.ndarray) -> np.ndarray:
    """Four bridge-test uniforms per path for the given block; shape ``(len(paths), 4)``."""
    k0, k1 = seed_key(seed)
    words = philox4x64(np.uint64(block), np.asarray(paths, dtype=np.uint64), 0, 1, k0, k1)
    return np.stack([bits_to_unit(w) for w in words], axis=1)


def path_normals(seed: int, path: int, n_steps: int) -> np.ndarray:
    """The first ``n_steps`` increments of one path (reference for tests)."""
    n_blocks = (n_steps + 3) // 4
    k0, k1 = seed_key(seed)
    blocks = np.arange(n_blocks, dtype=np.uint64)
    r0, r1, r2, r3 = philox4x64(blocks, np.uint64(path), 0, 0, k0, k1)
    z0, z1 = box_muller(r0, r1)
    z2, z3 = box_muller(r2, r3)
    return np.stack([z0, z1, z2, z3], axis=1).reshape(-1)[:n_steps]


def philox_uniforms(seed: int, stream: int, size: int, k: int = 2, start: int = 0) -> np.ndarray:
    """``size x k`` uniforms on [0, 1) from counters ``(0, start + i, stream, 0)``."""
    if not 1 <= k <= 4:
        raise ValueError("k must be between 1 and 4")
    if stream < 1:
        raise ValueError("stream 0 is reserved for path increments")
    k0, k1 = seed_key(seed)
    idx = np.arange(start, start + size, dtype=np.uint64)
    words = philox4x64(0, idx, np.uint64(stream), 0, k0, k1)
    return np.stack([bits_to_unit(w) for w in words[:k]], axis=1)
