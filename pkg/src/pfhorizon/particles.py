"""Generic particle filtering driven by a per-step block of points in (0, 1)^2.

Each step resamples by the inverse CDF of the sorted weighted empirical law using
the first coordinate of every point, then mutates through the kernel quantile
using the second coordinate.  With i.i.d. uniform blocks this is the bootstrap
particle filter; with scrambled (0,2)-sequence blocks it is SQMC.

Two implementations share the same random words and conventions:

* :func:`step` and friends, a plain numpy reference,
* :func:`run_filter`, a fused numba loop that also scores every step against the
  exact laws.

A run keyed by ``key`` draws all its words from one counter-based stream.  Step
``t`` (``t = 1`` is the initialization) reads the window
``[(t - 1) W, t W)`` where ``W = step_words(N, mode)``, so any step's block can be
regenerated on its own with :func:`block_for_step`.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .lowdisc import BlockScrambler, _scramble_into, _upper_caps, block_levels, block_words, raw_prefixes
from .metrics import _disc_core, kolmogorov_emp_cdf, mixture_cdf
from .model import ModelParams, kalman_exact
from .randomness import StreamKey, derive_stream, gauss_quantile, phi_cdf, phi_quantile, word_to_uniform, words_to_uniforms

__all__ = [
    "Source",
    "ParticleSystem",
    "UniformBlock",
    "MixtureSpec",
    "ErrorTrace",
    "step_words",
    "block_for_step",
    "init_system",
    "resample_one",
    "resample",
    "mutate_one",
    "step",
    "run_filter",
    "sample_mixture",
    "one_step_error",
]


class Source(enum.Enum):
    IID = "iid"
    SCRAMBLED = "scrambled"

    @classmethod
    def parse(cls, value) -> "Source":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown mode {value!r}; expected 'iid' or 'scrambled'") from None


@dataclass(frozen=True)
class ParticleSystem:
    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "weights", w)
        if s.ndim != 1 or s.size == 0 or w.shape != s.shape:
            raise ValueError("need N >= 1 states with matching weights")
        if not np.all(np.isfinite(s)):
            raise ValueError("states must be finite")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")

    @property
    def N(self) -> int:
        return self.states.size

    @classmethod
    def uniform(cls, states) -> "ParticleSystem":
        s = np.asarray(states, dtype=np.float64)
        return cls(s, np.full(s.size, 1.0 / s.size))


@dataclass(frozen=True)
class UniformBlock:
    points: np.ndarray
    source: Source = Source.IID

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", p)
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] == 0:
            raise ValueError("block must have shape (N, 2) with N >= 1")
        if not np.all((p > 0.0) & (p < 1.0)):
            raise ValueError("block points must lie strictly inside (0, 1)^2")

    @property
    def N(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class MixtureSpec:
    """``sum_m W_m delta_{x_m} (x) N(comp_mean_m, comp_std_m^2)``."""

    atoms: np.ndarray
    weights: np.ndarray
    comp_mean: np.ndarray
    comp_std: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, f), dtype=np.float64)
                for f in ("atoms", "weights", "comp_mean", "comp_std")]
        for name, a in zip(("atoms", "weights", "comp_mean", "comp_std"), arrs):
            object.__setattr__(self, name, a)
        if arrs[0].ndim != 1 or arrs[0].size == 0 or any(a.shape != arrs[0].shape for a in arrs):
            raise ValueError("mixture arrays must be 1-D of one common length")
        if np.any(arrs[1] < 0) or abs(float(arrs[1].sum()) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if np.any(arrs[3] <= 0):
            raise ValueError("component standard deviations must be positive")

    @classmethod
    def from_system(cls, system: ParticleSystem, params: ModelParams) -> "MixtureSpec":
        """Law of (resampled atom, mutated state) under one filter step."""
        return cls(system.states, system.weights, params.rho * system.states,
                   np.full(system.N, params.sigma))

    def cdf(self, x):
        return mixture_cdf(x, self.weights, self.comp_mean, self.comp_std)


# ---------------------------------------------------------------------------
# word layout

def step_words(N: int, mode) -> int:
    """Words per step, padded to whole Philox counters so windows can be reached by seeking."""
    mode = Source.parse(mode)
    need = 2 * N if mode is Source.IID else block_words(N)
    return -(-need // 4) * 4


def _block_from_words(N: int, words: np.ndarray, mode: Source) -> UniformBlock:
    if mode is Source.IID:
        u = words_to_uniforms(words[:2 * N]).reshape(N, 2)
        return UniformBlock(u, mode)
    pts, _ = BlockScrambler(N)(words)
    return UniformBlock(pts, mode)


def block_for_step(N: int, key: StreamKey, t: int, mode) -> UniformBlock:
    """Regenerate the block a run keyed by ``key`` consumes at step ``t``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    mode = Source.parse(mode)
    W = step_words(N, mode)
    words = derive_stream(key).seek((t - 1) * W).raw(W)
    return _block_from_words(N, words, mode)


# ---------------------------------------------------------------------------
# reference implementation

def _log_weights_normalized(states: np.ndarray, c: float) -> np.ndarray:
    lw = -0.5 * c * states * states
    w = np.exp(lw - lw.max())
    return w / w.sum()


def init_system(params: ModelParams, block: UniformBlock) -> ParticleSystem:
    x = params.mu1 + math.sqrt(params.sigma1_sq) * gauss_quantile(block.points[:, 0])
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return ParticleSystem(x, _log_weights_normalized(x, params.c))


def _sorted_cdf(system: ParticleSystem):
    order = np.argsort(system.states, kind="stable")
    xs = system.states[order]
    cum = np.cumsum(system.weights[order])
    return xs, cum / cum[-1]


def resample(system: ParticleSystem, u) -> np.ndarray:
    """Inverse CDF of the weighted empirical law at each ``u`` (sorted, index-tie-broken)."""
    xs, cum = _sorted_cdf(system)
    idx = np.searchsorted(cum, np.asarray(u, dtype=np.float64), side="left")
    return xs[np.minimum(idx, xs.size - 1)]


def resample_one(system: ParticleSystem, u: float) -> float:
    return float(resample(system, np.array([u]))[0])


def mutate_one(x_hat: float, u: float, params: ModelParams) -> float:
    return params.rho * x_hat + params.sigma * gauss_quantile(u)


def step(system: ParticleSystem, block: UniformBlock, params: ModelParams):
    """One resample/mutate/reweight step; returns (predictive, filtering) systems."""
    if block.N != system.N:
        raise ValueError("block size must equal system size")
    x_hat = resample(system, block.points[:, 0])
    x = params.rho * x_hat + params.sigma * np.atleast_1d(gauss_quantile(block.points[:, 1]))
    return ParticleSystem.uniform(x), ParticleSystem(x, _log_weights_normalized(x, params.c))


def sample_mixture(spec: MixtureSpec, points) -> tuple[np.ndarray, np.ndarray]:
    """Map points of (0,1)^2 to (atom, value) pairs: weighted inverse CDF over atoms, then component quantile."""
    pts = np.asarray(points, dtype=np.float64)
    order = np.argsort(spec.atoms, kind="stable")
    cum = np.cumsum(spec.weights[order])
    cum /= cum[-1]
    sel = order[np.minimum(np.searchsorted(cum, pts[:, 0], side="left"), order.size - 1)]
    values = spec.comp_mean[sel] + spec.comp_std[sel] * np.atleast_1d(gauss_quantile(pts[:, 1]))
    return spec.atoms[sel], values


def one_step_error(system: ParticleSystem, block: UniformBlock, params: ModelParams) -> float:
    """Kolmogorov distance between the new predictive particles and the exact one-step law of ``system``."""
    pred, _ = step(system, block, params)
    spec = MixtureSpec.from_system(system, params)
    return kolmogorov_emp_cdf(pred.states, pred.weights, spec.cdf)


# ---------------------------------------------------------------------------
# fused loop

@dataclass
class ErrorTrace:
    """Per-step errors for t = 1..T (index ``t - 1``)."""

    kol_filter: np.ndarray
    kol_pred: np.ndarray
    disc_filter: np.ndarray | None = None
    disc_pred: np.ndarray | None = None
    inside: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.kol_filter.size

    @property
    def sup_kol_filter(self) -> np.ndarray:
        return np.maximum.accumulate(self.kol_filter)

    @property
    def sup_kol_pred(self) -> np.ndarray:
        return np.maximum.accumulate(self.kol_pred)

    @property
    def error(self) -> np.ndarray:
        """Per-step max of filtering and predictive Kolmogorov errors."""
        return np.maximum(self.kol_filter, self.kol_pred)

    def sup_error(self, t_from: int = 1, t_to: int | None = None) -> float:
        t_to = self.T if t_to is None else t_to
        return float(self.error[t_from - 1:t_to].max())


@nb.njit(inline="always")
def _insertion_sort2(keys, other, n):
    for i in range(1, n):
        k = keys[i]
        o = other[i]
        j = i - 1
        while j >= 0 and keys[j] > k:
            keys[j + 1] = keys[j]
            other[j + 1] = other[j]
            j -= 1
        keys[j + 1] = k
        other[j + 1] = o


@nb.njit(inline="always")
def _bucket_scatter(vals, other, bkey, n, counts, out_vals, out_other):
    """Stable counting sort of (vals, other) by integer keys ``bkey`` in [0, n)."""
    for i in range(n + 1):
        counts[i] = 0
    for i in range(n):
        counts[bkey[i] + 1] += 1
    for i in range(n):
        counts[i + 1] += counts[i]
    for i in range(n):
        k = bkey[i]
        p = counts[k]
        out_vals[p] = vals[i]
        out_other[p] = other[i]
        counts[k] = p + 1


@nb.njit(cache=True)
def _finish_step(x, n, c, pm, ps, fm, fs, lo, hi, with_disc,
                 bkey, counts, xs, Fp, wn, cum, fpre):
    """Sort new states, score both empirical laws and rebuild the resampling CDF.

    Returns (kol_pred, kol_filt, disc_pred, disc_filt, inside_count).  Ties need no
    grouping for the Kolmogorov sup: partial sums inside a tie lie between the
    group's outer values, so they never raise the maximum.
    """
    for i in range(n):
        f = phi_cdf((x[i] - pm) / ps)
        fpre[i] = f
        k = int(f * n)
        bkey[i] = k if k < n else n - 1
    _bucket_scatter(x, fpre, bkey, n, counts, xs, Fp)
    # keys track the CDF only up to rounding, so finish with a global insertion pass
    _insertion_sort2(xs, Fp, n)
    # largest log-weight sits at the state closest to zero
    j = np.searchsorted(xs, 0.0)
    amin = abs(xs[j]) if j < n else np.inf
    if j > 0 and abs(xs[j - 1]) < amin:
        amin = abs(xs[j - 1])
    mx = -0.5 * c * amin * amin
    inv_n = 1.0 / n
    kp = 0.0
    s = 0.0
    inside = 0
    for i in range(n):
        xi = xs[i]
        f = Fp[i]
        kp = max(kp, f - i * inv_n, (i + 1) * inv_n - f)
        s += math.exp(-0.5 * c * xi * xi - mx)
        cum[i] = s
        wn[i] = phi_cdf((xi - fm) / fs)
        if lo <= xi <= hi:
            inside += 1
    kf = 0.0
    prev = 0.0
    for i in range(n):
        ci = cum[i] / s
        cum[i] = ci
        f = wn[i]
        kf = max(kf, f - prev, ci - f)
        prev = ci
    dp = 0.0
    df = 0.0
    if with_disc:
        dp = _disc_core(xs, np.full(n, inv_n), Fp)
        # wn holds filtering CDF values; swap them out for the weights
        Ff = wn.copy()
        prev = 0.0
        for i in range(n):
            wn[i] = cum[i] - prev
            prev = cum[i]
        df = _disc_core(xs, wn, Ff)
    return kp, kf, dp, df, inside


@nb.njit(cache=True)
def _run_chunk(words, W, t0, steps, scrambled, n, rho, sigma, c, mu1, s1,
               pmean, pvar, fmean, fvar, lo, hi, with_disc,
               r1, r2, m, perm1, perm2, scratch, upper, cellmap,
               u1, u2, slot, order, bkey, counts, tmp_u, x, xs, Fp, wn, cum, fpre,
               out_kp, out_kf, out_dp, out_df, out_in):
    for k in range(steps):
        t = t0 + k
        base = k * W
        if scrambled:
            _scramble_into(words[base:base + W], r1, r2, m, n, perm1, perm2, scratch, upper,
                           u1, u2, slot)
        else:
            for i in range(n):
                u1[i] = word_to_uniform(words[base + 2 * i])
                u2[i] = word_to_uniform(words[base + 2 * i + 1])
        if t == 1:
            for i in range(n):
                x[i] = mu1 + s1 * phi_quantile(u1[i])
        else:
            # visit points in increasing u1 so resampling is a single merge over cum
            if scrambled:
                # first coordinates occupy distinct dyadic cells, which orders them
                for i in range(cellmap.shape[0]):
                    cellmap[i] = -1
                for i in range(n):
                    cellmap[slot[i]] = i
                q = 0
                for i in range(cellmap.shape[0]):
                    p = cellmap[i]
                    if p >= 0:
                        order[q] = p
                        tmp_u[q] = u1[p]
                        q += 1
            else:
                for i in range(n):
                    kk = int(u1[i] * n)
                    bkey[i] = kk if kk < n else n - 1
                    slot[i] = i
                _bucket_scatter(u1, slot, bkey, n, counts, tmp_u, order)
                _insertion_sort2(tmp_u, order, n)
            j = 0
            for i in range(n):
                p = order[i]
                u = tmp_u[i]
                while j < n - 1 and cum[j] < u:
                    j += 1
                x[p] = rho * xs[j] + sigma * phi_quantile(u2[p])
        ti = t - 1
        kp, kf, dp, df, inside = _finish_step(
            x, n, c, pmean[ti], math.sqrt(pvar[ti]), fmean[ti], math.sqrt(fvar[ti]),
            lo, hi, with_disc, bkey, counts, xs, Fp, wn, cum, fpre)
        out_kp[ti] = kp
        out_kf[ti] = kf
        out_dp[ti] = dp
        out_df[ti] = df
        out_in[ti] = inside


class _Workspace:
    def __init__(self, N: int, mode: Source):
        self.N = N
        f = lambda: np.empty(N)
        self.u1, self.u2, self.tmp_u, self.x, self.xs = f(), f(), f(), f(), f()
        self.Fp, self.wn, self.cum, self.fpre = f(), f(), f(), f()
        self.slot = np.empty(N, dtype=np.int64)
        self.order = np.empty(N, dtype=np.int64)
        self.bkey = np.empty(N, dtype=np.int64)
        self.counts = np.empty(N + 1, dtype=np.int64)
        if mode is Source.SCRAMBLED:
            self.m = block_levels(N)
            self.r1, self.r2 = raw_prefixes(N, self.m)
            size = 1 << self.m
            self.perm1 = np.empty(size, dtype=np.int64)
            self.perm2 = np.empty(size, dtype=np.int64)
            self.scratch = np.empty(size, dtype=np.int64)
            self.upper = _upper_caps(self.m)
            self.cellmap = np.empty(size, dtype=np.int64)
        else:
            self.m = 0
            self.r1 = self.r2 = np.zeros(1, dtype=np.int64)
            self.perm1 = self.perm2 = self.scratch = np.zeros(1, dtype=np.int64)
            self.upper = np.ones(1)
            self.cellmap = np.zeros(1, dtype=np.int64)


def run_filter(params: ModelParams, N: int, T: int, mode, key: StreamKey, *,
               with_discrepancy: bool = False, interval: tuple[float, float] | None = None,
               sink=None, chunk_words: int = 1 << 20, return_system: bool = False):
    """Run initialization plus ``T - 1`` steps and score each step against the exact laws.

    ``sink``, if given, is called after every chunk of steps with ``(t_first, t_last)``
    and the partially filled :class:`ErrorTrace`.  With ``interval=(a, b)`` the number
    of predictive particles inside ``[a, b]`` is recorded per step.
    """
    if N < 1 or T < 1:
        raise ValueError("need N >= 1 and T >= 1")
    mode = Source.parse(mode)
    traj = kalman_exact(params, T)
    W = step_words(N, mode)
    ws = _Workspace(N, mode)
    lo, hi = (math.inf, -math.inf) if interval is None else (float(interval[0]), float(interval[1]))
    if interval is not None and not lo < hi:
        raise ValueError("interval needs a < b")
    kp, kf = np.empty(T), np.empty(T)
    dp, df = np.empty(T), np.empty(T)
    inside = np.zeros(T, dtype=np.int64)
    trace = ErrorTrace(kf, kp, df if with_discrepancy else None, dp if with_discrepancy else None,
                       inside if interval is not None else None,
                       meta={"N": N, "T": T, "mode": mode.value, "key": str(key)})
    stream = derive_stream(key)
    per_chunk = max(1, chunk_words // W)
    t = 1
    while t <= T:
        steps = min(per_chunk, T - t + 1)
        words = stream.raw(steps * W)
        _run_chunk(words, W, t, steps, mode is Source.SCRAMBLED, N, params.rho, params.sigma,
                   params.c, params.mu1, math.sqrt(params.sigma1_sq),
                   traj.pred_mean, traj.pred_var, traj.filt_mean, traj.filt_var, lo, hi,
                   with_discrepancy, ws.r1, ws.r2, ws.m, ws.perm1, ws.perm2, ws.scratch, ws.upper,
                   ws.cellmap, ws.u1, ws.u2, ws.slot, ws.order, ws.bkey, ws.counts, ws.tmp_u,
                   ws.x, ws.xs, ws.Fp, ws.wn, ws.cum, ws.fpre, kp, kf, dp, df, inside)
        if sink is not None:
            sink(t, t + steps - 1, trace)
        t += steps
    if return_system:
        w = np.diff(ws.cum, prepend=0.0)
        return trace, ParticleSystem(ws.xs.copy(), w / w.sum())
    return trace
