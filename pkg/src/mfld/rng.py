"""Counter-based Gaussian noise streams.

Every random draw in the simulator is addressed by the tuple
(seed, purpose tag, iteration k, stream r, position), so the value of any
draw is independent of scheduling, batching, or evaluation order.  The
generator is Philox4x64-10 evaluated directly on counter arrays, which makes
drawing a block of per-iteration noise a single vectorized call instead of
constructing a bit generator object per step.

Stream layout: key = (seed mod 2^64, crc32(tag)); counter words are
(block index within the stream, r, k + 1, 0).  Iteration k = -1 is reserved
for initialization draws, hence the +1 shift.  Each counter yields four
64-bit words, mapped to doubles in (0, 1) and then to normals by the
inverse CDF.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

# Philox4x64 round constants (Salmon et al. 2011).
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_ROUNDS = 10


@dataclass(frozen=True)
class RngSpec:
    """Seed for the whole family of counter-based streams."""

    seed: int

    def key(self, tag: str) -> tuple[np.uint64, np.uint64]:
        """Philox key for one purpose tag: (seed, crc32(tag))."""
        k0 = np.uint64(self.seed % (1 << 64))
        k1 = np.uint64(zlib.crc32(tag.encode("utf-8")))
        return k0, k1


def _mulhilo(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128 bit product as (high, low) words."""
    lo = a * b
    ah = a >> np.uint64(32)
    al = a & _MASK32
    bh = b >> np.uint64(32)
    bl = b & _MASK32
    albl = al * bl
    albh = al * bh
    ahbl = ah * bl
    carry = ((albl >> np.uint64(32)) + (albh & _MASK32) + (ahbl & _MASK32)) >> np.uint64(32)
    hi = ah * bh + (albh >> np.uint64(32)) + (ahbl >> np.uint64(32)) + carry
    return hi, lo


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten Philox4x64 rounds on arrays of counters under a fixed key.

    The counter words may be scalars or equal-length uint64 arrays; the
    return value is the four output words.  Arithmetic wraps mod 2^64 by
    construction.
    """
    x0 = np.asarray(c0, dtype=np.uint64)
    x1 = np.asarray(c1, dtype=np.uint64)
    x2 = np.asarray(c2, dtype=np.uint64)
    x3 = np.asarray(c3, dtype=np.uint64)
    key0 = np.uint64(k0)
    key1 = np.uint64(k1)
    with np.errstate(over="ignore"):
        for _ in range(_ROUNDS):
            hi0, lo0 = _mulhilo(_M0, x0)
            hi1, lo1 = _mulhilo(_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ key0, lo1, hi0 ^ x3 ^ key1, lo0
            key0 = key0 + _W0
            key1 = key1 + _W1
    return x0, x1, x2, x3


def _uniform_from_bits(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles strictly inside (0, 1)."""
    return (words >> np.uint64(11)) * 2.0**-53 + 2.0**-54


def _raw_words(spec: RngSpec, tag: str, ks: np.ndarray, rs: np.ndarray, count: int) -> np.ndarray:
    """Philox output words for the grid ks x rs, `count` values per stream.

    Returns shape (len(ks), len(rs), count) of uint64.  Value j of stream
    (k, r) lives in lane j % 4 of counter block j // 4, so a longer draw from
    the same stream extends a shorter one.
    """
    ks = np.asarray(ks, dtype=np.int64)
    rs = np.asarray(rs, dtype=np.int64)
    if np.any(ks < -1):
        raise ValueError("iteration index must be >= -1")
    if np.any(rs < 0):
        raise ValueError("stream index must be >= 0")
    nk, nr = ks.size, rs.size
    blocks = max((count + 3) // 4, 0)
    if blocks == 0 or nk == 0 or nr == 0:
        return np.empty((nk, nr, count), dtype=np.uint64)
    k0, k1 = spec.key(tag)
    c0 = np.broadcast_to(np.arange(blocks, dtype=np.uint64), (nk, nr, blocks))
    c1 = np.broadcast_to(rs.astype(np.uint64)[None, :, None], (nk, nr, blocks))
    c2 = np.broadcast_to((ks + 1).astype(np.uint64)[:, None, None], (nk, nr, blocks))
    flat = (c0.reshape(-1), c1.reshape(-1), c2.reshape(-1), np.zeros(nk * nr * blocks, dtype=np.uint64))
    x0, x1, x2, x3 = philox4x64(*flat, k0, k1)
    words = np.stack([x0, x1, x2, x3], axis=-1).reshape(nk, nr, blocks * 4)
    return words[:, :, :count]


def uniform_values(spec: RngSpec, tag: str, k: int, r: int, count: int) -> np.ndarray:
    """`count` uniforms in (0, 1) from stream (tag, k, r)."""
    words = _raw_words(spec, tag, np.array([k]), np.array([r]), count)
    return _uniform_from_bits(words[0, 0])


def normal_values(spec: RngSpec, tag: str, k: int, r: int, count: int) -> np.ndarray:
    """`count` standard normals from stream (tag, k, r)."""
    return ndtri(uniform_values(spec, tag, k, r, count))


def normal_matrix(spec: RngSpec, tag: str, k: int, rows: int, cols: int) -> np.ndarray:
    """(rows, cols) standard normals; row r equals normal_values(..., r, cols)."""
    words = _raw_words(spec, tag, np.array([k]), np.arange(rows), cols)
    return ndtri(_uniform_from_bits(words[0]))


def normal_block(spec: RngSpec, tag: str, k0: int, steps: int, rows: int, cols: int) -> np.ndarray:
    """(steps, rows, cols) normals; slice j equals normal_matrix at k0 + j."""
    words = _raw_words(spec, tag, k0 + np.arange(steps), np.arange(rows), cols)
    return ndtri(_uniform_from_bits(words))


def normal_steps(spec: RngSpec, tag: str, k0: int, steps: int, r: int, cols: int) -> np.ndarray:
    """(steps, cols) normals for one stream r across iterations k0 .. k0+steps-1."""
    words = _raw_words(spec, tag, k0 + np.arange(steps), np.array([r]), cols)
    return ndtri(_uniform_from_bits(words[:, 0, :]))
