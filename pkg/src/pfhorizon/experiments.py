"""Experiments: configuration, replicate scheduling and one routine per claim checked.

Every routine is deterministic in ``(config, master_seed)``.  Replicates get their
own stream keys and results are merged in replicate order, so the worker count
never changes the output.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .lowdisc import DEFAULT_NET, DigitalNet2D, delta_envelope, is_net, raw_points, scrambled_block, star_discrepancy_2d
from .metrics import kolmogorov_emp_cdf, kolmogorov_gauss_gauss, rect_discrepancy_b2
from .model import DEFAULT_PARAMS, GaussianLaw, ModelParams, gaussian_phi_step, kalman_exact, stationary
from .particles import (MixtureSpec, Source, block_for_step, init_system, run_filter,
                        sample_mixture, step)
from .randomness import StreamKey, gauss_cdf, gauss_quantile

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "Table",
    "worker_count",
    "run_traces",
    "extinction",
    "sweep",
    "sqmc_uniform",
    "dkw",
    "perturb",
    "qmc_verify",
    "extinction_rho",
    "prop3_constants",
    "dkw_particles",
    "rate_function",
    "binomial_halfwidth",
    "perturb_shift",
]

SCHEMA_VERSION = 1
WORKERS_ENV = "PFHORIZON_WORKERS"


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams = DEFAULT_PARAMS
    N: tuple[int, ...] = (512,)
    T: tuple[int, ...] = (1000,)
    replicates: int = 200
    kappa: float = 0.2
    q: float = 0.1
    mode: str = "both"
    master_seed: int = 20240611
    interval: tuple[float, float] = (-0.1, 0.1)
    keys: int = 20
    z: float = 3.0
    gamma: float = 0.05
    kappas: tuple[float, ...] = (0.02, 0.04, 0.06, 0.08, 0.1)
    deltas: tuple[float, ...] = (0.1, 0.03, 0.01, 0.003)
    t_split: int = 1000
    with_discrepancy: bool = False
    shared_horizons: bool = False
    early_stop: bool = False
    compare_iid: bool = False
    out: str | None = None
    fmt: str = "csv"

    def __post_init__(self):
        object.__setattr__(self, "N", tuple(int(n) for n in _as_tuple(self.N)))
        object.__setattr__(self, "T", tuple(int(t) for t in _as_tuple(self.T)))
        object.__setattr__(self, "kappas", tuple(float(k) for k in _as_tuple(self.kappas)))
        object.__setattr__(self, "deltas", tuple(float(d) for d in _as_tuple(self.deltas)))
        object.__setattr__(self, "interval", tuple(float(v) for v in self.interval))
        object.__setattr__(self, "mode", str(self.mode).lower())
        if not self.N or min(self.N) < 1:
            raise ConfigError("N", "every N must be >= 1")
        if not self.T or min(self.T) < 1:
            raise ConfigError("T", "every T must be >= 1")
        if self.replicates < 1:
            raise ConfigError("replicates", "must be >= 1")
        if not 0 < self.kappa <= 1:
            raise ConfigError("kappa", "must lie in (0, 1]")
        if not 0 < self.q < 1:
            raise ConfigError("q", "must lie in (0, 1)")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma", "must lie in (0, 1)")
        if self.mode not in ("iid", "scrambled", "both"):
            raise ConfigError("mode", "must be iid, scrambled or both")
        if len(self.interval) != 2 or not self.interval[0] < self.interval[1]:
            raise ConfigError("interval", "need a < b")
        if self.keys < 1:
            raise ConfigError("keys", "must be >= 1")
        if self.fmt not in ("csv", "jsonl"):
            raise ConfigError("format", "must be csv or jsonl")
        if any(not 0 < k <= 1 for k in self.kappas):
            raise ConfigError("kappas", "each must lie in (0, 1]")
        if any(not 0 <= d < 1 for d in self.deltas):
            raise ConfigError("deltas", "each must lie in [0, 1)")
        if self.t_split < 1:
            raise ConfigError("t_split", "must be >= 1")

    @property
    def modes(self) -> tuple[Source, ...]:
        if self.mode == "both":
            return (Source.IID, Source.SCRAMBLED)
        return (Source.parse(self.mode),)

    def echo(self) -> dict:
        d = asdict(self)
        d["model"] = asdict(self.model)
        return d

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def _as_tuple(v):
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


@dataclass
class Table:
    """Rows plus a JSON-ready summary and any violated guarantees."""

    name: str
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(WORKERS_ENV, f"not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError(WORKERS_ENV, "must be >= 1")
    return n


def _pmap(fn, jobs: list, workers: int | None = None) -> list:
    """Map in job order; results are identical for any worker count."""
    workers = worker_count() if workers is None else workers
    if workers == 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _key(cfg: ExperimentConfig, *path) -> StreamKey:
    return StreamKey(cfg.master_seed, tuple(path))


def binomial_halfwidth(p_hat: float, n: int, z: float) -> float:
    """Normal-approximation binomial half-width ``z sqrt(p (1 - p) / n)``."""
    return z * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


def rate_function(delta: float) -> float:
    """``delta^{1/2} log(1 + delta^{-1/2})``."""
    r = math.sqrt(delta)
    return r * math.log1p(1.0 / r)


# ---------------------------------------------------------------------------
# run

def run_traces(cfg: ExperimentConfig) -> dict:
    N, T = cfg.N[0], cfg.T[0]
    out = {}
    for mode in cfg.modes:
        out[mode.value] = run_filter(cfg.model, N, T, mode, _key(cfg, ("run", 0), ("mode", mode is Source.SCRAMBLED)),
                                     with_discrepancy=cfg.with_discrepancy)
    return out


def trace_table(trace, name: str) -> Table:
    rows = [{"t": t + 1, "kol_filter": trace.kol_filter[t], "kol_pred": trace.kol_pred[t],
             "sup_kol_filter": sf, "sup_kol_pred": sp}
            for t, (sf, sp) in enumerate(zip(trace.sup_kol_filter, trace.sup_kol_pred))]
    if trace.disc_filter is not None:
        for r, df, dp in zip(rows, trace.disc_filter, trace.disc_pred):
            r["disc_filter"] = df
            r["disc_pred"] = dp
    summary = {"sup_kol_filter": float(trace.kol_filter.max()),
               "sup_kol_pred": float(trace.kol_pred.max()), **trace.meta}
    if trace.meta.get("mode") == Source.SCRAMBLED.value:
        d = delta_envelope(trace.meta["N"])
        summary["delta_N"] = d
        summary["implied_constant"] = trace.sup_error() / rate_function(d)
    return Table(name, rows, summary)


# ---------------------------------------------------------------------------
# extinction

def extinction_rho(a: float, b: float, sigma: float) -> float:
    """Per-particle lower bound on landing outside ``[a, b]`` after one mutation."""
    return min(1.0 - gauss_cdf(2.0 * (b - a) / sigma), 0.5)


def prop3_constants(params: ModelParams, kappa: float, T: int):
    """Half-width ``a_kappa``, first time ``T_kappa`` and ``rho_kappa`` for the horizon ceiling.

    ``a_kappa`` is the smallest half-width at which both limiting laws give
    ``[-a, a]`` mass above ``kappa`` (nudged up by a relative 1e-6 to make the
    inequality strict); ``T_kappa`` is the first ``t`` from which both exact laws
    keep mass above ``kappa`` through ``T``, or ``None`` if there is no such ``t``.
    """
    st = stationary(params)
    if kappa >= 1:
        return math.inf, None, 0.0
    z = float(gauss_quantile((1.0 + kappa) / 2.0))
    a = z * math.sqrt(max(st.sigma_inf_sq, st.pred_var_inf)) * (1.0 + 1e-6)
    traj = kalman_exact(params, T)
    ok = np.array([min(traj.predictive(t).mass(-a, a), traj.filtering(t).mass(-a, a)) > kappa
                   for t in range(1, T + 1)])
    bad = np.flatnonzero(~ok)
    T_k = 1 if bad.size == 0 else int(bad[-1]) + 2
    if T_k > T:
        T_k = None
    rho_k = min(1.0 - gauss_cdf(4.0 * a / params.sigma), 0.5)
    return a, T_k, rho_k


def _extinction_job(job):
    params, N, T, key, interval, with_disc = job
    tr = run_filter(params, N, T, Source.IID, key, interval=interval, with_discrepancy=with_disc)
    ext = tr.inside[1:] == 0
    first = int(np.argmax(ext)) + 2 if ext.any() else 0
    sup_d = float(max(tr.disc_filter.max(), tr.disc_pred.max())) if with_disc else math.nan
    return int(ext.sum()), ext.size, first, sup_d


def extinction(cfg: ExperimentConfig) -> Table:
    N, T = cfg.N[0], cfg.T[0]
    a, b = cfg.interval
    rho = extinction_rho(a, b, cfg.model.sigma)
    jobs = [(cfg.model, N, T, _key(cfg, ("extinction", 0), ("rep", r)), (a, b), True)
            for r in range(cfg.replicates)]
    res = _pmap(_extinction_job, jobs)
    hits = sum(r[0] for r in res)
    obs = sum(r[1] for r in res)
    freq = hits / obs if obs else 0.0
    se = math.sqrt(freq * (1 - freq) / obs) if obs else 0.0
    firsts = np.array([r[2] for r in res])
    bound = rho ** N
    edges = [2]
    while edges[-1] <= T:
        edges.append(edges[-1] * 2)
    hist, _ = np.histogram(firsts[firsts > 0], bins=edges)
    a_k, T_k, rho_k = prop3_constants(cfg.model, cfg.kappa, T)
    ceiling = (1.0 - rho_k ** N) ** (T - T_k + 1) if T_k is not None else 1.0
    survived = float(np.mean([r[3] <= cfg.kappa for r in res]))
    rows = [{"bin_lo": lo, "bin_hi": hi - 1, "first_extinctions": int(h)}
            for lo, hi, h in zip(edges[:-1], edges[1:], hist)]
    summary = {
        "interval": [a, b], "N": N, "T": T, "replicates": cfg.replicates,
        "rho": rho, "lower_bound": bound, "step_observations": obs,
        "extinction_frequency": freq, "se": se,
        "runs_extinct_before_T": float(np.mean(firsts > 0)),
        "kappa": cfg.kappa, "a_kappa": a_k, "T_kappa": T_k, "rho_kappa": rho_k,
        "ceiling": ceiling, "frac_sup_disc_le_kappa": survived,
    }
    viol = []
    if freq < bound - cfg.z * se:
        viol.append(f"extinction frequency {freq:.6g} below rho^N - {cfg.z} SE = {bound - cfg.z * se:.6g}")
    return Table("extinction", rows, summary, viol)


# ---------------------------------------------------------------------------
# horizon sweep

def _sweep_job(job):
    params, N, T_max, horizons, key = job
    tr = run_filter(params, N, T_max, Source.IID, key)
    run_sup = np.maximum.accumulate(tr.kol_filter)
    return [float(run_sup[h - 1]) for h in horizons]


def sweep(cfg: ExperimentConfig) -> Table:
    """Failure probability ``P(sup_{t <= T} kol_filter >= kappa)`` on an (N, T) grid.

    With ``shared_horizons`` each (N, replicate) is one run to ``max(T)`` read at every
    horizon; otherwise every horizon gets independent runs.  With ``early_stop`` the
    ladder scan ends at the first N meeting ``q`` at every horizon.
    """
    Ns = sorted(set(cfg.N))
    Ts = sorted(set(cfg.T))
    R = cfg.replicates
    p_hat: dict[tuple[int, int], float] = {}
    for N in Ns:
        if cfg.shared_horizons:
            jobs = [(cfg.model, N, Ts[-1], Ts, _key(cfg, ("sweep", 1), ("N", N), ("rep", r))) for r in range(R)]
            sups = np.array(_pmap(_sweep_job, jobs))
            for j, T in enumerate(Ts):
                p_hat[N, T] = float(np.mean(sups[:, j] >= cfg.kappa))
        else:
            for T in Ts:
                jobs = [(cfg.model, N, T, [T], _key(cfg, ("sweep", 0), ("N", N), ("T", T), ("rep", r)))
                        for r in range(R)]
                sups = np.array(_pmap(_sweep_job, jobs))[:, 0]
                p_hat[N, T] = float(np.mean(sups >= cfg.kappa))
        if cfg.early_stop and all(p_hat[N, T] <= cfg.q for T in Ts):
            break
    done = sorted({N for N, _ in p_hat})
    minimal = {}
    minimal_cons = {}
    for T in Ts:
        minimal[T] = next((N for N in done if p_hat[N, T] <= cfg.q), None)
        minimal_cons[T] = next((N for N in done
                                if p_hat[N, T] + binomial_halfwidth(p_hat[N, T], R, cfg.z) <= cfg.q), None)
    rows = []
    for N in done:
        for T in Ts:
            p = p_hat[N, T]
            rows.append({"N": N, "T": T, "replicates": R, "p_hat": p,
                         "ci_halfwidth": binomial_halfwidth(p, R, cfg.z),
                         "minimal": N == minimal[T], "minimal_conservative": N == minimal_cons[T]})
    fit = _fit_minimal(Ts, minimal, cfg.q)
    viol = []
    for N in done:
        for T0, T1 in zip(Ts, Ts[1:]):
            p0, p1 = p_hat[N, T0], p_hat[N, T1]
            se = math.sqrt((p0 * (1 - p0) + p1 * (1 - p1)) / R)
            if p1 < p0 - cfg.z * se:
                viol.append(f"N={N}: p_hat drops from {p0:.4g} at T={T0} to {p1:.4g} at T={T1}")
    summary = {"kappa": cfg.kappa, "q": cfg.q, "z": cfg.z, "shared_horizons": cfg.shared_horizons,
               "minimal_N": {str(T): minimal[T] for T in Ts},
               "minimal_N_conservative": {str(T): minimal_cons[T] for T in Ts}, **fit}
    return Table("sweep", rows, summary, viol)


def _fit_minimal(Ts, minimal, q) -> dict:
    pts = [(math.log(T / q), minimal[T]) for T in Ts if minimal[T] is not None]
    if len(pts) < 2:
        return {"slope": None, "intercept": None, "r2": None}
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts], dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2}


# ---------------------------------------------------------------------------
# SQMC uniform-in-time

def _sqmc_job(job):
    params, N, T, t_split, key, mode = job
    tr = run_filter(params, N, T, mode, key)
    early = tr.sup_error(1, min(t_split, T))
    late = tr.sup_error(t_split + 1, T) if T > t_split else math.nan
    return tr.sup_error(), early, late, float(tr.kol_filter.max()), float(tr.kol_pred.max())


def sqmc_uniform(cfg: ExperimentConfig) -> Table:
    """Sup-in-time SQMC error on a ladder of N, one independent scramble family per key.

    The error at each t is the larger of the filtering and predictive Kolmogorov
    distances.  Flatness compares ``B_k`` (sup over ``t > t_split``) with ``A_k``
    (sup over ``t <= t_split``) across keys: ``mean(B) - mean(A) <= z sd(A)``.
    """
    Ns = sorted(set(cfg.N))
    T = cfg.T[0]
    modes = [Source.SCRAMBLED] + ([Source.IID] if cfg.compare_iid else [])
    rows = []
    per_n = {}
    for mode in modes:
        for N in Ns:
            jobs = [(cfg.model, N, T, cfg.t_split, _key(cfg, ("sqmc", 0), ("mode", mode is Source.SCRAMBLED),
                                                         ("N", N), ("k", k)), mode)
                    for k in range(cfg.keys)]
            res = _pmap(_sqmc_job, jobs)
            for k, (sup_all, early, late, sf, sp) in enumerate(res):
                rows.append({"mode": mode.value, "N": N, "key": k, "sup_error": sup_all,
                             "sup_early": early, "sup_late": late,
                             "sup_kol_filter": sf, "sup_kol_pred": sp})
            if mode is Source.SCRAMBLED:
                arr = np.array(res)
                d = delta_envelope(N)
                A, B = arr[:, 1], arr[:, 2]
                sd_a = float(np.std(A, ddof=1)) if len(A) > 1 else 0.0
                per_n[N] = {"max_sup": float(arr[:, 0].max()), "delta_N": d,
                            "implied_constant": float(arr[:, 0].max()) / rate_function(d),
                            "mean_early": float(A.mean()), "mean_late": float(np.nanmean(B)) if T > cfg.t_split else None,
                            "sd_early": sd_a}
            else:
                per_n.setdefault(N, {})["iid_max_sup"] = float(max(r[0] for r in res))
    viol = []
    for a, b in zip(Ns, Ns[1:]):
        if not per_n[b]["max_sup"] < per_n[a]["max_sup"]:
            viol.append(f"max sup error not decreasing from N={a} to N={b}")
        if per_n[b]["implied_constant"] > per_n[a]["implied_constant"]:
            viol.append(f"implied constant increases from N={a} to N={b}")
    flat = {}
    for N in Ns:
        s = per_n[N]
        if s.get("mean_late") is None:
            continue
        gap = s["mean_late"] - s["mean_early"]
        tol = cfg.z * s["sd_early"]
        flat[str(N)] = {"gap": gap, "tolerance": tol, "ok": gap <= tol}
        if gap > tol:
            viol.append(f"N={N}: late sup exceeds early sup by {gap:.4g} > tolerance {tol:.4g}")
    summary = {"T": T, "keys": cfg.keys, "t_split": cfg.t_split,
               "per_N": {str(N): v for N, v in per_n.items()}, "flatness": flat}
    return Table("sqmc-uniform", rows, summary, viol)


# ---------------------------------------------------------------------------
# per-step bounds

def dkw_particles(kappa: float, gamma: float) -> float:
    """Particle count making the one-step Kolmogorov error exceed ``kappa`` with probability at most ``gamma``."""
    return math.log(2.0 / gamma) / (2.0 * kappa * kappa)


def net_bound(dstar: float) -> float:
    """``sqrt(96 D*) + 12 D*``, the one-step error bound at block star discrepancy ``D*``."""
    return math.sqrt(96.0 * dstar) + 12.0 * dstar


def _one_step_job(job):
    """One-step errors of a reference run: list of (t, kolmogorov, rect, block D*)."""
    params, N, T, key, mode, measure = job
    out = []
    filt = init_system(params, block_for_step(N, key, 1, mode))
    for t in range(2, T + 1):
        block = block_for_step(N, key, t, mode)
        spec = MixtureSpec.from_system(filt, params)
        pred, new_filt = step(filt, block, params)
        kol = kolmogorov_emp_cdf(pred.states, pred.weights, spec.cdf)
        rect = dstar = math.nan
        if measure:
            atoms, values = sample_mixture(spec, block.points)
            rect = rect_discrepancy_b2(atoms, values, spec)
            dstar = star_discrepancy_2d(block.points)
        out.append((t, kol, rect, dstar))
        filt = new_filt
    return out


def dkw(cfg: ExperimentConfig) -> Table:
    """I.i.d. one-step tails against ``2 exp(-2 N kappa^2)``; scrambled steps against the net bound.

    I.i.d. part: ``N = cfg.N[0]``, ``replicates`` runs of ``T`` steps.  Scrambled
    part: every N in ``cfg.N`` that is a power of 2, ``keys`` runs each.
    """
    T = max(cfg.T[0], 2)
    rows = []
    viol = []
    summary = {"gamma": cfg.gamma, "N_kappa_gamma": {str(k): dkw_particles(k, cfg.gamma) for k in cfg.kappas}}
    if Source.IID in cfg.modes:
        N = cfg.N[0]
        jobs = [(cfg.model, N, T, _key(cfg, ("dkw", 0), ("N", N), ("rep", r)), Source.IID, False)
                for r in range(cfg.replicates)]
        errs = np.array([e[1] for res in _pmap(_one_step_job, jobs) for e in res])
        for k in cfg.kappas:
            p = float(np.mean(errs > k))
            se = math.sqrt(p * (1 - p) / errs.size)
            bound = 2.0 * math.exp(-2.0 * N * k * k)
            ok = p <= bound + cfg.z * se
            rows.append({"mode": "iid", "N": N, "kappa": k, "observations": int(errs.size),
                         "tail": p, "se": se, "bound": bound, "ok": ok})
            if not ok:
                viol.append(f"iid N={N} kappa={k}: tail {p:.4g} > bound {bound:.4g} + {cfg.z} SE")
    if Source.SCRAMBLED in cfg.modes:
        worst = 0.0
        count = 0
        for N in cfg.N:
            if N & (N - 1) or N > 4096:
                continue
            jobs = [(cfg.model, N, T, _key(cfg, ("dkw", 1), ("N", N), ("k", k)), Source.SCRAMBLED, True)
                    for k in range(cfg.keys)]
            for k, res in enumerate(_pmap(_one_step_job, jobs)):
                for t, kol, rect, dstar in res:
                    b = net_bound(dstar)
                    count += 1
                    worst = max(worst, rect / b)
                    rows.append({"mode": "scrambled", "N": N, "key": k, "t": t, "kolmogorov": kol,
                                 "rect_b2": rect, "dstar": dstar, "bound": b})
                    if kol > b or rect > b:
                        viol.append(f"scrambled N={N} key={k} t={t}: error {max(kol, rect):.4g} > bound {b:.4g}")
        summary["scrambled_checks"] = count
        summary["scrambled_worst_ratio"] = worst
    return Table("dkw", rows, summary, viol)


# ---------------------------------------------------------------------------
# perturbation

def perturb_shift(delta: float, s: float) -> float:
    """Mean shift ``d`` with ``||N(m, s^2) - N(m + d, s^2)|| = delta``."""
    if delta == 0:
        return 0.0
    return 2.0 * s * float(gauss_quantile((1.0 + delta) / 2.0))


def perturbed_sup_error(params: ModelParams, T: int, delta: float, alternate: bool) -> float:
    """``sup_{t <= T} ||mu_t - eta_t||`` for the shifted recursion started at ``eta_1``."""
    eta = params.initial_law
    mu = eta
    worst = 0.0
    for t in range(2, T + 1):
        eta = gaussian_phi_step(eta, params)
        base = gaussian_phi_step(mu, params)
        d = perturb_shift(delta, base.std)
        sign = -1.0 if (alternate and t % 2) else 1.0
        mu = GaussianLaw(base.mean + sign * d, base.var)
        worst = max(worst, kolmogorov_gauss_gauss(mu, eta))
    return worst


def perturb(cfg: ExperimentConfig, tolerance_factor: float = 2.0) -> Table:
    T = cfg.T[0]
    rows = []
    viol = []
    consts = {}
    for pattern, alt in (("alternating", True), ("same-sign", False)):
        cs = []
        for delta in cfg.deltas:
            err = perturbed_sup_error(cfg.model, T, delta, alt)
            scale = delta * math.log1p(1.0 / delta) if delta > 0 else 0.0
            c_hat = err / scale if scale > 0 else math.nan
            rows.append({"pattern": pattern, "delta": delta, "sup_error": err,
                         "scale": scale, "c_hat": c_hat, "error_over_delta": err / delta if delta else math.nan})
            if delta > 0:
                cs.append(c_hat)
        if cs:
            ratio = max(cs) / min(cs)
            consts[pattern] = {"min": min(cs), "max": max(cs), "ratio": ratio}
            if ratio > tolerance_factor:
                viol.append(f"{pattern}: fitted constant varies by x{ratio:.3f} > x{tolerance_factor}")
    return Table("perturb", rows, {"T": T, "constants": consts}, viol)


# ---------------------------------------------------------------------------
# net verification

def qmc_verify(cfg: ExperimentConfig, net: DigitalNet2D = DEFAULT_NET, chi2_bins: int = 16,
               chi2_points: int = 64) -> Table:
    """Net property, envelope bound and marginal uniformity of scrambled prefixes."""
    from scipy.stats import chi2 as chi2_dist

    Ns = sorted(set(cfg.N))
    n_max = max(Ns + [chi2_points])
    rows = []
    viol = []
    for m in range(n_max.bit_length()):
        if (1 << m) <= n_max and not is_net(raw_points(1 << m, net), m):
            viol.append(f"raw prefix of length {1 << m} is not a (0,{m},2)-net")
    pooled = []
    for k in range(cfg.keys):
        key = _key(cfg, ("qmc", 0), ("k", k))
        pts = scrambled_block(n_max, key, net)
        pooled.append(pts[:chi2_points, 0])
        for N in Ns:
            prefix = pts[:N]
            net_ok = None
            if N & (N - 1) == 0:
                net_ok = is_net(prefix, N.bit_length() - 1)
            d = star_discrepancy_2d(prefix)
            env = delta_envelope(N)
            rows.append({"N": N, "key": k, "net_ok": net_ok, "dstar": d, "delta_N": env, "ok": d <= env})
            if net_ok is False:
                viol.append(f"net check failed at N={N}, key={k}")
            if d > env:
                viol.append(f"envelope violated at N={N}, key={k}: {d:.6g} > {env:.6g}")
    counts = np.bincount(np.minimum((np.concatenate(pooled) * chi2_bins).astype(int), chi2_bins - 1),
                         minlength=chi2_bins)
    expected = counts.sum() / chi2_bins
    stat = float(np.sum((counts - expected) ** 2 / expected))
    crit = float(chi2_dist.ppf(0.99, chi2_bins - 1))
    if stat > crit:
        viol.append(f"chi-square {stat:.4g} exceeds 1% critical value {crit:.4g}")
    summary = {"keys": cfg.keys, "chi2": stat, "chi2_critical": crit,
               "delta_N": {str(N): delta_envelope(N) for N in Ns}}
    return Table("qmc-verify", rows, summary, viol)


def config_field_names() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]
