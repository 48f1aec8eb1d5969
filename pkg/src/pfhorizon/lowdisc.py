"""Base-2 (0,2)-sequence, nested uniform scrambling, net checks and exact 2-D star discrepancy.

Digits are stored MSB-first in 64-bit integers: digit 1 of a coordinate is
bit 63.  Coordinate 1 is the van der Corput sequence, coordinate 2 uses the
upper-triangular Pascal matrix mod 2.

Scrambling of a block of ``N`` points uses ``m = ceil(log2 N)`` levels of an
explicit random permutation tree.  The first ``N`` raw points have pairwise
distinct ``m``-digit prefixes in each coordinate, so every tree node below
depth ``m`` is visited by at most one point and its digits there are i.i.d.
fair bits.  Those are drawn directly as a uniform tail offset, which gives the
law of full-depth nested scrambling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .randomness import StreamKey, derive_stream, word_to_uniform

__all__ = [
    "DigitalNet2D",
    "DEFAULT_NET",
    "raw_point",
    "raw_points",
    "raw_prefixes",
    "block_levels",
    "block_words",
    "scramble_from_words",
    "scrambled_block",
    "is_net",
    "star_discrepancy_2d",
    "delta_envelope",
]

DEPTH = 64


def _identity_columns() -> tuple[int, ...]:
    return tuple(1 << (DEPTH - 1 - j) for j in range(DEPTH))


def _pascal_columns() -> tuple[int, ...]:
    # binom(j, i) is odd iff i & j == i (Lucas)
    cols = []
    for j in range(DEPTH):
        col = 0
        for i in range(j + 1):
            if i & j == i:
                col |= 1 << (DEPTH - 1 - i)
        cols.append(col)
    return tuple(cols)


@dataclass(frozen=True)
class DigitalNet2D:
    """Generator matrices as 64 column words per coordinate (column j acts on bit j of n)."""

    cols1: tuple[int, ...] = field(default_factory=_identity_columns)
    cols2: tuple[int, ...] = field(default_factory=_pascal_columns)

    def __post_init__(self):
        if len(self.cols1) != DEPTH or len(self.cols2) != DEPTH:
            raise ValueError(f"generator matrices need {DEPTH} columns")

    def digits(self, n: int) -> tuple[int, int]:
        if not 0 <= n < 1 << DEPTH:
            raise ValueError("index out of range")
        y1 = y2 = 0
        j = 0
        while n:
            if n & 1:
                y1 ^= self.cols1[j]
                y2 ^= self.cols2[j]
            n >>= 1
            j += 1
        return y1, y2


DEFAULT_NET = DigitalNet2D()


def raw_point(n: int, net: DigitalNet2D = DEFAULT_NET) -> tuple[float, float]:
    y1, y2 = net.digits(n)
    return (y1 >> 11) * 2.0 ** -53, (y2 >> 11) * 2.0 ** -53


def _digits_array(N: int, net: DigitalNet2D) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(N, dtype=np.uint64)
    y1 = np.zeros(N, dtype=np.uint64)
    y2 = np.zeros(N, dtype=np.uint64)
    for j in range(max(int(N - 1).bit_length(), 0)):
        bit = ((n >> np.uint64(j)) & np.uint64(1)).astype(bool)
        y1[bit] ^= np.uint64(net.cols1[j])
        y2[bit] ^= np.uint64(net.cols2[j])
    return y1, y2


def raw_points(N: int, net: DigitalNet2D = DEFAULT_NET) -> np.ndarray:
    """First ``N`` raw points (index origin 0) as an ``(N, 2)`` array in [0, 1)^2."""
    y1, y2 = _digits_array(N, net)
    out = np.empty((N, 2))
    out[:, 0] = (y1 >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    out[:, 1] = (y2 >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    return out


def raw_prefixes(N: int, m: int, net: DigitalNet2D = DEFAULT_NET) -> tuple[np.ndarray, np.ndarray]:
    """Leading ``m`` digits of both coordinates of the first ``N`` raw points, as integers."""
    y1, y2 = _digits_array(N, net)
    if m == 0:
        return np.zeros(N, dtype=np.int64), np.zeros(N, dtype=np.int64)
    sh = np.uint64(DEPTH - m)
    return (y1 >> sh).astype(np.int64), (y2 >> sh).astype(np.int64)


def block_levels(N: int) -> int:
    if N < 1:
        raise ValueError("N must be >= 1")
    return (N - 1).bit_length()


def block_words(N: int) -> int:
    """Words consumed by one scrambled block: two packed trees, then two tail words per point."""
    return 2 * _tree_words(block_levels(N)) + 2 * N


def _tree_words(m: int) -> int:
    return ((1 << m) - 1 + 63) // 64


@nb.njit(cache=True)
def _tree_permutation(words, offset, m, perm, scratch):
    """Fill ``perm[:2**m]`` with the nested scramble of all m-digit prefixes.

    Node ``j`` of the heap-ordered tree (level k occupies j in [2**k - 1, 2**(k+1) - 1))
    flips the digit below it when its bit is set.
    """
    perm[0] = 0
    for k in range(m):
        base = (1 << k) - 1
        width = 1 << k
        for pre in range(width):
            node = base + pre
            b = (words[offset + (node >> 6)] >> np.uint64(node & 63)) & np.uint64(1)
            p = perm[pre] << 1
            scratch[2 * pre] = p + b
            scratch[2 * pre + 1] = p + (1 - b)
        for i in range(2 * width):
            perm[i] = scratch[i]


@nb.njit(inline="always")
def _place(s, tail, m, scale, upper):
    u = (s + tail) * scale
    cap = upper[s]
    return u if u < cap else cap


@nb.njit(cache=True)
def _scramble_into(words, r1, r2, m, N, perm1, perm2, scratch, upper, out1, out2, s1_out):
    tw = ((1 << m) - 1 + 63) // 64
    _tree_permutation(words, 0, m, perm1, scratch)
    _tree_permutation(words, tw, m, perm2, scratch)
    scale = 2.0 ** (-m)
    base = 2 * tw
    for n in range(N):
        s1 = perm1[r1[n]]
        s2 = perm2[r2[n]]
        s1_out[n] = s1
        out1[n] = _place(s1, word_to_uniform(words[base + 2 * n]), m, scale, upper)
        out2[n] = _place(s2, word_to_uniform(words[base + 2 * n + 1]), m, scale, upper)


def _upper_caps(m: int) -> np.ndarray:
    """Largest double strictly below each dyadic cell's right end (s + 1) / 2**m."""
    ends = (np.arange(1, (1 << m) + 1, dtype=np.float64)) * 2.0 ** -m
    return np.nextafter(ends, 0.0)


class BlockScrambler:
    """Reusable buffers for scrambling repeated blocks of one size."""

    def __init__(self, N: int, net: DigitalNet2D = DEFAULT_NET):
        self.N = N
        self.m = block_levels(N)
        self.r1, self.r2 = raw_prefixes(N, self.m, net)
        size = 1 << self.m
        self.perm1 = np.empty(size, dtype=np.int64)
        self.perm2 = np.empty(size, dtype=np.int64)
        self.scratch = np.empty(size, dtype=np.int64)
        self.upper = _upper_caps(self.m)
        self.words_per_block = block_words(N)

    def __call__(self, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = np.empty((self.N, 2))
        s1 = np.empty(self.N, dtype=np.int64)
        u1 = np.empty(self.N)
        u2 = np.empty(self.N)
        _scramble_into(words, self.r1, self.r2, self.m, self.N, self.perm1, self.perm2,
                       self.scratch, self.upper, u1, u2, s1)
        out[:, 0] = u1
        out[:, 1] = u2
        return out, s1


def scramble_from_words(N: int, words: np.ndarray, net: DigitalNet2D = DEFAULT_NET) -> np.ndarray:
    if words.shape[0] < block_words(N):
        raise ValueError("not enough random words for block")
    pts, _ = BlockScrambler(N, net)(words)
    return pts


def scrambled_block(N: int, key: StreamKey, net: DigitalNet2D = DEFAULT_NET) -> np.ndarray:
    """First ``N`` points of a nested-uniform scrambled copy of the sequence; shape ``(N, 2)``."""
    stream = derive_stream(key)
    return scramble_from_words(N, stream.raw(block_words(N)), net)


def is_net(points, m: int, t: int = 0) -> bool:
    """True iff every base-2 box of volume 2**(t - m) holds exactly 2**t points."""
    pts = np.asarray(points, dtype=np.float64)
    if m < t or t < 0:
        raise ValueError("need m >= t >= 0")
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] != 1 << m:
        raise ValueError(f"is_net(m={m}) needs exactly {1 << m} points of dimension 2")
    if np.any((pts < 0.0) | (pts >= 1.0)):
        raise ValueError("points must lie in [0, 1)^2")
    k = m - t
    for d1 in range(k + 1):
        d2 = k - d1
        i1 = np.floor(pts[:, 0] * 2.0 ** d1).astype(np.int64)
        i2 = np.floor(pts[:, 1] * 2.0 ** d2).astype(np.int64)
        counts = np.bincount(i1 * (1 << d2) + i2, minlength=1 << k)
        if np.any(counts != 1 << t):
            return False
    return True


@nb.njit(cache=True)
def _star_disc_kernel(x, y):
    N = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ys = np.sort(y)
    uy = np.empty(N + 1)
    ny = 0
    for i in range(N):
        if ny == 0 or ys[i] != uy[ny - 1]:
            uy[ny] = ys[i]
            ny += 1
    uy[ny] = 1.0
    ry = np.searchsorted(uy[:ny], y)
    # cnt[j]: points already swept with y-rank <= j
    cnt = np.zeros(ny + 1, dtype=np.int64)
    best = 0.0
    i = 0
    while i <= N:
        if i < N:
            bx = x[order[i]]
        else:
            bx = 1.0
        # open boxes [0, bx) x [0, b2): swept points have x < bx
        prev = 0
        for j in range(ny + 1):
            c_open = prev
            v = bx * uy[j] - c_open / N
            if v > best:
                best = v
            prev = cnt[j]
        if i == N:
            break
        g = i
        while g < N and x[order[g]] == bx:
            r = ry[order[g]]
            for j in range(r, ny + 1):
                cnt[j] += 1
            g += 1
        # closed boxes [0, bx] x [0, uy[j]]
        for j in range(ny):
            v = cnt[j] / N - bx * uy[j]
            if v > best:
                best = v
        i = g
    return best


def star_discrepancy_2d(points) -> float:
    """Exact star discrepancy over anchored boxes [0, b), b in [0, 1]^2.

    Runs in O(N^2); inputs up to N = 4096 are in contract.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (N, 2)")
    if pts.shape[0] == 0:
        raise ValueError("star discrepancy of an empty point set")
    if pts.shape[0] > 4096:
        raise ValueError("exact star discrepancy is limited to N <= 4096")
    return float(_star_disc_kernel(np.ascontiguousarray(pts[:, 0]), np.ascontiguousarray(pts[:, 1])))


def delta_envelope(N: int) -> float:
    """Almost-sure bound on the star discrepancy of the first N scrambled (0,2)-sequence points."""
    if N < 1:
        raise ValueError("N must be >= 1")
    ln2 = math.log(2.0)
    lnN = math.log(N)
    if N & (N - 1) == 0:
        return (lnN + 3.0) / (2.0 * N)
    return (lnN ** 2 + 11.0 * ln2 * lnN + 18.0 * ln2 ** 2) / (N * 8.0 * ln2 ** 2)
