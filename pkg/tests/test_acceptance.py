"""Acceptance criteria, one test each.  Run with ``pytest tests/test_acceptance.py -v``.

A summary line per criterion is printed at the end of the session.
"""
import math

import numpy as np
import pytest

from oracles import brute_discrepancy, brute_rect, brute_star, grid_gauss_gauss, grid_kolmogorov
from pfhorizon.experiments import ExperimentConfig, dkw, extinction, perturb, sqmc_uniform, sweep
from pfhorizon.lowdisc import delta_envelope, is_net, scrambled_block, star_discrepancy_2d
from pfhorizon.metrics import (
    discrepancy_emp_gauss,
    kolmogorov_emp_gauss,
    kolmogorov_gauss_gauss,
    rect_discrepancy_b2,
)
from pfhorizon.model import (
    GaussianLaw,
    ModelParams,
    filter_via_qk,
    fit_stability_rate,
    h_eval,
    h_pointwise_bound,
    h_variation,
    kalman_exact,
    qk_schedule,
    stationary,
)
from pfhorizon.particles import MixtureSpec, sample_mixture
from pfhorizon.randomness import StreamKey, derive_stream

SEED = 20240611


def uniforms(tag, n, i=0):
    return derive_stream(StreamKey(SEED, (("acceptance", 0), (tag, i)))).uniforms(n)


def test_criterion_01_qk_matches_kalman(record_property):
    """Oracle equivalence of the closed-form schedule and the Kalman recursion"""
    worst = 0.0
    for k in range(20):
        u = uniforms("params", 5, k)
        p = ModelParams(rho=-1.5 + 3 * u[0], sigma=0.2 + 2 * u[1], c=0.05 + 3 * u[2],
                        mu1=-5 + 10 * u[3], sigma1_sq=0.1 + 4 * u[4])
        tr = kalman_exact(p, 100)
        sched = qk_schedule(p, 100)
        for t in range(2, 101):
            a, b = filter_via_qk(p, t, sched), tr.filtering(t)
            worst = max(worst, abs(a.mean - b.mean), abs(a.var - b.var))
    record_property("detail", f"max abs diff {worst:.2e} over 20 parameter sets, t <= 100")
    assert worst <= 1e-10


def test_criterion_02_hand_values(record_property):
    """Hand values at rho = sigma = c = 1"""
    p = ModelParams(rho=1.0, sigma=1.0, c=1.0, mu1=0.0, sigma1_sq=1.0)
    s = qk_schedule(p, 2)
    st = stationary(p)
    golden = (math.sqrt(5) - 1) / 2
    errs = [abs(s.c_k[1] - 0.5), abs(s.c_k[2] - 0.6), abs(s.sigma_sq_k[2] - 0.6),
            abs(st.c_star - golden), abs(st.sigma_inf_sq - golden)]
    record_property("detail", f"max abs error {max(errs):.2e}")
    assert max(errs) <= 1e-12


def test_criterion_03_nets_and_envelope(record_property):
    """Scrambled prefixes are nets and stay within the discrepancy envelope"""
    net_fail = 0
    env_fail = []
    checks = 0
    worst = 0.0
    ladder = sorted(set(range(1, 65)) | {1 << m for m in range(11)}
                    | {int(round(x)) for x in np.geomspace(65, 1024, 30)})
    for k in range(100):
        key = StreamKey(SEED, (("acceptance", 3), ("key", k)))
        seq = scrambled_block(4096, key)
        for m in range(13):
            net_fail += not is_net(seq[:1 << m], m)
        Ns = range(1, 1025) if k < 20 else ladder
        for N in Ns:
            d = star_discrepancy_2d(seq[:N])
            env = delta_envelope(N)
            checks += 1
            worst = max(worst, d / env)
            if d > env:
                env_fail.append((N, k))
        # independently scrambled blocks, as consumed by the filter
        for N in ladder[::7]:
            d = star_discrepancy_2d(scrambled_block(N, key.child("block", N)))
            checks += 1
            worst = max(worst, d / delta_envelope(N))
            if d > delta_envelope(N):
                env_fail.append((N, k))
    record_property("detail", f"net failures {net_fail}/1300, envelope violations {len(env_fail)}/{checks}, "
                              f"worst D*/delta {worst:.3f}")
    assert net_fail == 0
    assert not env_fail


def test_criterion_04_metric_oracles(record_property):
    """Exact metrics match brute-force oracles and satisfy the sandwich inequality"""
    worst = {"kol": 0.0, "disc": 0.0, "gg": 0.0, "rect": 0.0, "star": 0.0}
    sandwich_fail = 0
    for i in range(100):
        u = uniforms("metric", 80, i)
        N = 1 + i % 32
        x = -3 + 6 * u[:N]
        if i % 3 == 0:
            x = np.round(x * 2) / 2
        w = u[32:32 + N] + 0.05
        w /= w.sum()
        law = GaussianLaw(-1 + 2 * u[70], 0.2 + 2 * u[71])
        k = kolmogorov_emp_gauss(x, law, w)
        d = discrepancy_emp_gauss(x, law, w)
        worst["kol"] = max(worst["kol"], abs(k - grid_kolmogorov(x, w, law)))
        worst["disc"] = max(worst["disc"], abs(d - brute_discrepancy(x, w, law)))
        sandwich_fail += not (k <= d <= 2 * k)
        # star discrepancy on up to 16 points, with ties on every fourth set
        n2 = 1 + i % 16
        pts = uniforms("star", 2 * n2, i).reshape(n2, 2)
        if i % 4 == 0:
            pts = np.floor(pts * 4) / 4
        worst["star"] = max(worst["star"], abs(star_discrepancy_2d(pts) - brute_star(pts)))
        # quadrant discrepancy of a sampled mixture, N <= 64, M <= 4
        M = 1 + i % 4
        atoms = np.sort(-2 + 4 * u[72:72 + M])
        mw = u[76:76 + M] + 0.1
        spec = MixtureSpec(atoms, mw / mw.sum(), 0.9 * atoms, np.full(M, 0.5 + u[50]))
        n3 = 1 + int(u[51] * 64)
        a_s, v_s = sample_mixture(spec, uniforms("rect", 2 * n3, i).reshape(n3, 2))
        worst["rect"] = max(worst["rect"], abs(rect_discrepancy_b2(a_s, v_s, spec) - brute_rect(a_s, v_s, spec)))
    for i in range(1000):
        u = uniforms("gg", 4, i)
        a = GaussianLaw(-2 + 4 * u[0], 0.1 + 3 * u[1])
        b = GaussianLaw(-2 + 4 * u[2], 0.1 + 3 * u[3])
        worst["gg"] = max(worst["gg"], abs(kolmogorov_gauss_gauss(a, b) - grid_gauss_gauss(a, b)))
    tol = {"kol": 1e-6, "disc": 1e-12, "gg": 1e-9, "rect": 1e-12, "star": 1e-12}
    record_property("detail", ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
                    + f", sandwich failures {sandwich_fail}")
    assert sandwich_fail == 0
    for k in tol:
        assert worst[k] <= tol[k], k


def test_criterion_05_extinction(record_property):
    """Per-step all-outside frequency is at least rho^4 with N = 4"""
    tab = extinction(ExperimentConfig(N=(4,), T=(1001,), replicates=100, interval=(-0.1, 0.1)))
    s = tab.summary
    record_property("detail", f"freq {s['extinction_frequency']:.4f} vs rho^4 {s['lower_bound']:.5f} "
                              f"(rho {s['rho']:.5f}), {s['step_observations']} observations")
    assert abs(s["rho"] - 0.3445782583896758) < 1e-12
    assert s["step_observations"] >= 100_000
    assert s["extinction_frequency"] >= s["lower_bound"] - 3 * s["se"]


def test_criterion_06_horizon_degradation(record_property):
    """Failure probability at N = 64 does not decrease with the horizon"""
    tab = sweep(ExperimentConfig(N=(64,), T=(100, 1000, 10000), replicates=200, kappa=0.2))
    p = {r["T"]: r["p_hat"] for r in tab.rows}
    record_property("detail", "p_hat " + ", ".join(f"T={T}: {v:.3f}" for T, v in p.items()))
    violations = tab.violations
    assert not violations, violations
    assert p[10000] > 0


LADDER = tuple(int(round(16 * 2 ** (k / 4))) for k in range(8, 29))


@pytest.mark.slow
def test_criterion_07_log_horizon_scaling(record_property):
    """Minimal N with failure probability at most q grows linearly in log T"""
    tab = sweep(ExperimentConfig(N=LADDER, T=(100, 1000, 10000), replicates=200, kappa=0.2, q=0.1,
                                 shared_horizons=True, early_stop=True))
    mins = tab.summary["minimal_N"]
    record_property("detail", f"minimal N {mins}, R^2 {tab.summary['r2']}")
    vals = [mins[k] for k in ("100", "1000", "10000")]
    assert None not in vals
    assert vals == sorted(vals) and vals[-1] > vals[0]
    assert tab.summary["r2"] is not None and tab.summary["r2"] >= 0.9


@pytest.mark.slow
def test_criterion_08_sqmc_uniform_in_time(record_property):
    """Scrambled sup-in-time error decreases in N and stays flat in T"""
    tab = sqmc_uniform(ExperimentConfig(N=(256, 512, 1024, 2048, 4096), T=(100_000,), keys=20,
                                        mode="scrambled", t_split=1000))
    per = tab.summary["per_N"]
    flat = tab.summary["flatness"]
    record_property("detail", "; ".join(
        f"N={N}: sup {v['max_sup']:.4f}, C {v['implied_constant']:.3f}, gap {flat[N]['gap']:.4f}/tol {flat[N]['tolerance']:.4f}"
        for N, v in per.items()))
    violations = tab.violations
    assert not violations, violations


def test_criterion_09_per_step_bounds(record_property):
    """One-step errors obey the DKW tail (i.i.d.) and the net bound (scrambled)"""
    tab = dkw(ExperimentConfig(N=(500, 16, 64, 256, 1024), T=(5,), replicates=1000, keys=20, mode="both",
                               kappas=(0.02, 0.04, 0.06, 0.08, 0.1)))
    iid = [r for r in tab.rows if r["mode"] == "iid"]
    record_property("detail", "iid tails " + ", ".join(f"{r['kappa']}: {r['tail']:.4f} <= {r['bound']:.4f}" for r in iid)
                    + f"; scrambled checks {tab.summary['scrambled_checks']}, worst ratio {tab.summary['scrambled_worst_ratio']:.3f}")
    assert iid and iid[0]["observations"] >= 4000
    assert tab.summary["scrambled_checks"] == 4 * 20 * 4
    violations = tab.violations
    assert not violations, violations


def test_criterion_10_stability_and_h_functions(record_property):
    """Exact filters converge geometrically and h-functions respect their bounds"""
    p = ModelParams(rho=0.95, sigma=1.0, c=0.1, mu1=5.0, sigma1_sq=1.0)
    st, slope, r2 = fit_stability_rate(p, 10, 60)
    u = uniforms("h", 4 * 10_000).reshape(10_000, 4)
    worst_v = 0.0
    worst_pt = -math.inf
    for a, r, s, x in zip(-3 + 6 * u[:, 0], -3 + 6 * u[:, 1], 0.05 + 5 * u[:, 2], -20 + 40 * u[:, 3]):
        if abs(r) > 1e-9:
            worst_v = max(worst_v, h_variation(a, r, s))
        worst_pt = max(worst_pt, abs(h_eval(a, r, s, x)) - float(h_pointwise_bound(r, s, x)))
    record_property("detail", f"slope {slope:.4f}, R^2 {r2:.6f}, max V(h) {worst_v:.8f}, "
                              f"max |h| - bound {worst_pt:.2e}")
    assert slope < 0 and r2 >= 0.99
    assert worst_v <= 1 + 1e-6
    assert worst_pt <= 1e-12


def test_criterion_11_perturbation_constant(record_property):
    """Fitted perturbation constant is stable within a factor 2 across the delta ladder"""
    tab = perturb(ExperimentConfig(T=(1000,), deltas=(0.1, 0.03, 0.01, 0.003)))
    c = tab.summary["constants"]
    record_property("detail", ", ".join(f"{k}: ratio {v['ratio']:.3f}" for k, v in c.items()))
    violations = tab.violations
    assert not violations, violations
