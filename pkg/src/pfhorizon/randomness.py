"""Seeded uniform streams and the standard Gaussian CDF / quantile.

Streams are keyed by a master seed plus a path of ``(tag, index)`` pairs.
The path is hashed into a 128-bit Philox key, so every stream is a
counter-based generator that can be positioned anywhere without replaying
its prefix.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = [
    "StreamKey",
    "UniformStream",
    "derive_stream",
    "words_to_uniforms",
    "gauss_cdf",
    "gauss_quantile",
]

_MASK64 = (1 << 64) - 1
# 52 random bits keep (k + 0.5) exactly representable, so 0 and 1 are unreachable
_U_SHIFT = np.uint64(12)
_U_SCALE = 2.0 ** -52


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    path: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "path", tuple((str(tag), int(i)) for tag, i in self.path))

    def child(self, tag: str, index: int) -> "StreamKey":
        return StreamKey(self.master_seed, self.path + ((tag, index),))

    def digest(self) -> bytes:
        h = hashlib.blake2b(digest_size=16, person=b"pfhorizon-key")
        h.update((self.master_seed & _MASK64).to_bytes(8, "little"))
        for tag, index in self.path:
            raw = tag.encode("utf-8")
            h.update(len(raw).to_bytes(4, "little"))
            h.update(raw)
            h.update((index & _MASK64).to_bytes(8, "little"))
        return h.digest()

    def philox_key(self) -> np.ndarray:
        d = self.digest()
        return np.array([int.from_bytes(d[:8], "little"), int.from_bytes(d[8:], "little")],
                        dtype=np.uint64)

    def __str__(self):
        parts = "/".join(f"{tag}={i}" for tag, i in self.path)
        return f"{self.master_seed}:{parts}"


class UniformStream:
    """Philox4x64 stream for one key; yields raw words or uniforms in (0, 1)."""

    WORDS_PER_COUNTER = 4

    def __init__(self, key: StreamKey):
        self.key = key
        self._bitgen = np.random.Philox(key=key.philox_key())
        self._position = 0

    @property
    def position(self) -> int:
        """Number of 64-bit words consumed so far."""
        return self._position

    def seek(self, word_offset: int) -> "UniformStream":
        """Reposition at an absolute word offset (random access)."""
        if word_offset < 0:
            raise ValueError("word_offset must be non-negative")
        self._bitgen = np.random.Philox(key=self.key.philox_key())
        blocks, rem = divmod(word_offset, self.WORDS_PER_COUNTER)
        if blocks:
            self._bitgen.advance(blocks)
        if rem:
            self._bitgen.random_raw(rem)
        self._position = word_offset
        return self

    def raw(self, n: int) -> np.ndarray:
        out = self._bitgen.random_raw(n)
        self._position += n
        return out

    def uniforms(self, n: int) -> np.ndarray:
        return words_to_uniforms(self.raw(n))


def derive_stream(key: StreamKey) -> UniformStream:
    if not key.path:
        raise ValueError("stream path must be non-empty")
    return UniformStream(key)


def words_to_uniforms(words: np.ndarray) -> np.ndarray:
    k = (np.asarray(words, dtype=np.uint64) >> _U_SHIFT).astype(np.float64)
    return (k + 0.5) * _U_SCALE


@nb.njit(inline="always")
def word_to_uniform(w):
    return (float(w >> np.uint64(12)) + 0.5) * 2.220446049250313e-16


# ---------------------------------------------------------------------------
# Gaussian CDF and quantile (scalar kernels usable from other jitted code)

_INV_SQRT2 = 0.7071067811865476


@nb.njit(inline="always")
def phi_cdf(x):
    return 0.5 * math.erfc(-x * _INV_SQRT2)


# Wichura (1988), algorithm AS 241, PPND16.
@nb.njit
def phi_quantile(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r
                    + 6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r
                  + 1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r
                + 1.3314166789178437745e+2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r
                    + 3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r
                  + 5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r
                + 4.2313330701600911252e+1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r -= 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@nb.vectorize(["float64(float64)"], cache=True)
def _cdf_ufunc(x):
    return phi_cdf(x)


@nb.vectorize(["float64(float64)"], cache=True)
def _quantile_ufunc(p):
    return phi_quantile(p)


def gauss_cdf(x):
    """Standard normal CDF; scalar in, float out, array in, array out."""
    out = _cdf_ufunc(np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def gauss_quantile(p):
    """Standard normal quantile on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=np.float64)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("gauss_quantile requires 0 < p < 1")
    out = _quantile_ufunc(arr)
    return float(out) if np.ndim(out) == 0 else out
