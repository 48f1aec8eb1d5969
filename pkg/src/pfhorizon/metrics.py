"""Exact distances between weighted empirical laws and continuous reference laws.

* Kolmogorov distance ``sup_x |F_1(x) - F_2(x)|``.
* Discrepancy metric ``sup_{a <= b} |pi_1([a, b]) - pi_2([a, b])|`` over closed intervals.
* Kolmogorov distance between two Gaussians.
* Discrepancy over lower-left quadrants ``(-inf, a1] x (-inf, a2]`` for a sampled mixture.

Empirical inputs are ``(states, weights)`` arrays or any object with ``states`` and
``weights`` attributes.  The continuous law only enters through its CDF at the
particle positions, so all suprema are exact up to floating point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .randomness import phi_cdf

__all__ = [
    "MetricReport",
    "kolmogorov_emp_gauss",
    "discrepancy_emp_gauss",
    "kolmogorov_emp_cdf",
    "discrepancy_emp_cdf",
    "kolmogorov_gauss_gauss",
    "rect_discrepancy_b2",
    "metric_report",
    "mixture_cdf",
]


@dataclass(frozen=True)
class MetricReport:
    kolmogorov: float
    discrepancy: float | None = None
    argmax: float | None = None

    def __post_init__(self):
        if self.discrepancy is not None and not (
                self.kolmogorov <= self.discrepancy <= 2.0 * self.kolmogorov):
            raise ValueError("sandwich inequality violated")


def _unpack(system, weights=None):
    if weights is None:
        states, weights = system.states, system.weights
    else:
        states = system
    states = np.asarray(states, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if states.ndim != 1 or states.shape != weights.shape or states.size == 0:
        raise ValueError("states and weights must be non-empty 1-D arrays of equal length")
    order = np.argsort(states, kind="stable")
    return states[order], weights[order]


# Cores work on sorted states xs, their weights w and the reference CDF values F at xs.

@nb.njit(cache=True)
def _kol_core(xs, w, F):
    n = xs.shape[0]
    best = 0.0
    arg = 0
    below = 0.0
    i = 0
    while i < n:
        j = i
        mass = 0.0
        while j < n and xs[j] == xs[i]:
            mass += w[j]
            j += 1
        above = below + mass
        if j == n:
            above = 1.0
        g = max(abs(below - F[i]), abs(above - F[i]))
        if g > best:
            best = g
            arg = i
        below = above
        i = j
    return best, arg


@nb.njit(cache=True)
def _disc_core(xs, w, F):
    # D(x) = E(x) - F(x), Dm(x) = E(x-) - F(x), over distinct atoms.
    n = xs.shape[0]
    below = 0.0
    min_dm = 0.0  # running min of Dm over atoms so far, and the a -> -inf value 0
    max_d = 0.0   # running max of D over strictly earlier atoms, and 0
    s1 = 0.0
    s2 = 0.0
    i = 0
    while i < n:
        j = i
        mass = 0.0
        while j < n and xs[j] == xs[i]:
            mass += w[j]
            j += 1
        above = below + mass
        if j == n:
            above = 1.0
        d = above - F[i]
        dm = below - F[i]
        # negative gap: a just above an earlier atom, b just below this one
        v = max_d - dm
        if v > s2:
            s2 = v
        if dm < min_dm:
            min_dm = dm
        # positive gap: b at this atom, a at an atom up to here
        v = d - min_dm
        if v > s1:
            s1 = v
        if d > max_d:
            max_d = d
        below = above
        i = j
    # b -> +inf, where D vanishes
    if -min_dm > s1:
        s1 = -min_dm
    if max_d > s2:
        s2 = max_d
    return max(s1, s2)


def kolmogorov_emp_cdf(states, weights, cdf) -> float:
    """Kolmogorov distance from a weighted empirical law to a continuous law with vectorized ``cdf``."""
    xs, w = _unpack(states, weights)
    F = np.asarray(cdf(xs), dtype=np.float64)
    return float(_kol_core(xs, w, F)[0])


def discrepancy_emp_cdf(states, weights, cdf) -> float:
    xs, w = _unpack(states, weights)
    F = np.asarray(cdf(xs), dtype=np.float64)
    return float(_disc_core(xs, w, F))


def _gauss_cdf_at(law):
    s = math.sqrt(law.var)

    def f(x):
        return _phi_vec((x - law.mean) / s)
    return f


@nb.vectorize(["float64(float64)"], cache=True)
def _phi_vec(z):
    return phi_cdf(z)


def kolmogorov_emp_gauss(system, law, weights=None) -> float:
    """Exact Kolmogorov distance between a weighted particle system and a Gaussian law.

    ``system`` is either an object with ``states``/``weights`` or a states array
    with ``weights`` passed separately.
    """
    xs, w = _unpack(system, weights)
    return float(_kol_core(xs, w, _gauss_cdf_at(law)(xs))[0])


def discrepancy_emp_gauss(system, law, weights=None) -> float:
    """Exact discrepancy-metric distance over closed intervals ``[a, b]``.

    The empirical mass of ``[a, b]`` includes atoms at both ends, so it equals
    ``E(b) - E(a-)``; the Gaussian is continuous and needs no such care.
    """
    xs, w = _unpack(system, weights)
    return float(_disc_core(xs, w, _gauss_cdf_at(law)(xs)))


def metric_report(system, law, weights=None, with_discrepancy: bool = True) -> MetricReport:
    xs, w = _unpack(system, weights)
    F = _gauss_cdf_at(law)(xs)
    kol, arg = _kol_core(xs, w, F)
    disc = float(_disc_core(xs, w, F)) if with_discrepancy else None
    return MetricReport(float(kol), disc, float(xs[arg]))


def _gauss_crossings(m1, v1, m2, v2):
    """Real points where the two densities are equal (may be empty)."""
    A = 1.0 / v1 - 1.0 / v2
    B = -2.0 * (m1 / v1 - m2 / v2)
    C = m1 * m1 / v1 - m2 * m2 / v2 + math.log(v1 / v2)
    if A == 0.0:
        return [] if B == 0.0 else [-C / B]
    disc = B * B - 4.0 * A * C
    if disc < 0.0:
        return [-B / (2.0 * A)]
    q = -0.5 * (B + math.copysign(math.sqrt(disc), B))
    roots = [q / A]
    if q != 0.0:
        roots.append(C / q)
    return roots


def kolmogorov_gauss_gauss(a, b) -> float:
    if a.mean == b.mean and a.var == b.var:
        return 0.0
    sa, sb = math.sqrt(a.var), math.sqrt(b.var)
    best = 0.0
    for x in _gauss_crossings(a.mean, a.var, b.mean, b.var):
        if math.isfinite(x):
            best = max(best, abs(phi_cdf((x - a.mean) / sa) - phi_cdf((x - b.mean) / sb)))
    return best


def mixture_cdf(x, atoms_w, comp_mean, comp_std):
    """CDF of ``sum_m W_m N(comp_mean_m, comp_std_m^2)`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    z = (x[..., None] - comp_mean) / comp_std
    return _phi_vec(z) @ atoms_w


def rect_discrepancy_b2(atoms, values, spec) -> float:
    """Exact sup over quadrants ``(-inf, a1] x (-inf, a2]`` for samples ``(atoms, values)``.

    ``spec`` supplies ``atoms``, ``weights``, ``comp_mean`` and ``comp_std``; the
    reference measure of a quadrant is ``sum_{x_m <= a1} W_m F_m(a2)``.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if atoms.shape != values.shape or atoms.ndim != 1 or atoms.size == 0:
        raise ValueError("atoms and values must be non-empty 1-D arrays of equal length")
    sx = np.asarray(spec.atoms, dtype=np.float64)
    order = np.argsort(sx, kind="stable")
    sx = sx[order]
    W = np.asarray(spec.weights, dtype=np.float64)[order]
    cm = np.asarray(spec.comp_mean, dtype=np.float64)[order]
    cs = np.asarray(spec.comp_std, dtype=np.float64)[order]
    ux, grp_of_atom = np.unique(sx, return_inverse=True)
    idx = np.searchsorted(ux, atoms)
    if np.any(idx >= ux.size) or np.any(ux[np.minimum(idx, ux.size - 1)] != atoms):
        raise ValueError("sample atom not present in the mixture spec")
    N = atoms.size
    G = ux.size
    uv, vinv = np.unique(values, return_inverse=True)
    # counts[g, k]: samples at atom group g with value uv[k]
    counts = np.zeros((G, uv.size))
    np.add.at(counts, (idx, vinv), 1.0)
    emp_right = np.cumsum(np.cumsum(counts, axis=0), axis=1) / N
    emp_left = np.concatenate([np.zeros((G, 1)), emp_right[:, :-1]], axis=1)
    Fm = _phi_vec((uv[None, :] - cm[:, None]) / cs[:, None]) * W[:, None]
    gm = np.zeros((G, uv.size))
    np.add.at(gm, grp_of_atom, Fm)
    true = np.cumsum(gm, axis=0)
    best = max(float(np.max(np.abs(emp_right - true))), float(np.max(np.abs(emp_left - true))))
    # a2 = +inf
    emp_tot = np.cumsum(np.bincount(idx, minlength=G)) / N
    w_tot = np.cumsum(np.bincount(grp_of_atom, weights=W, minlength=G))
    return max(best, float(np.max(np.abs(emp_tot - w_tot))))
