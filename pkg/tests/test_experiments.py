import math

import pytest

from pfhorizon.experiments import (
    ConfigError,
    ExperimentConfig,
    binomial_halfwidth,
    dkw,
    dkw_particles,
    extinction,
    extinction_rho,
    net_bound,
    perturb,
    perturb_shift,
    perturbed_sup_error,
    prop3_constants,
    qmc_verify,
    rate_function,
    run_traces,
    sqmc_uniform,
    sweep,
    trace_table,
)
from pfhorizon.lowdisc import DEFAULT_NET, DigitalNet2D, delta_envelope
from pfhorizon.model import DEFAULT_PARAMS, kalman_exact, stationary
from pfhorizon.randomness import gauss_cdf


def test_config_validation():
    for bad in (dict(N=(0,)), dict(T=()), dict(kappa=0), dict(q=1), dict(mode="x"),
                dict(interval=(1, 0)), dict(fmt="xml"), dict(deltas=(1.0,)), dict(replicates=0)):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)


def test_config_echo_round_trip():
    cfg = ExperimentConfig(N=64, T=[10, 20])
    assert cfg.N == (64,) and cfg.T == (10, 20)
    echo = cfg.echo()
    assert echo["model"]["rho"] == DEFAULT_PARAMS.rho and echo["master_seed"] == cfg.master_seed


def test_extinction_rho_hand_value():
    rho = extinction_rho(-0.1, 0.1, 1.0)
    assert abs(rho - 0.3445782583896758) < 1e-15
    assert abs(rho ** 4 - 0.01409780458717385) < 1e-15
    assert 0.498 < extinction_rho(-0.001, 0.001, 1.0) < 0.5


def test_dkw_particles_hand_value():
    assert abs(dkw_particles(0.1, 0.05) - 184.4439727056968) < 1e-9
    assert math.ceil(dkw_particles(0.1, 0.05)) == 185
    assert abs(2 * math.exp(-2 * 500 * 0.01) - 9.079985952496971e-05) < 1e-18


def test_net_bound_and_rate_function():
    assert net_bound(0.0) == 0.0
    assert abs(net_bound(0.01) - (math.sqrt(0.96) + 0.12)) < 1e-15
    assert abs(rate_function(0.25) - 0.5 * math.log(3)) < 1e-15


def test_binomial_halfwidth():
    assert binomial_halfwidth(0.0, 100, 3) == 0.0
    assert abs(binomial_halfwidth(0.5, 100, 3) - 0.15) < 1e-15


def test_perturb_shift_calibration():
    d = perturb_shift(0.1, 1.0)
    assert abs(d - 0.2513226937101481) < 1e-12
    assert abs(2 * gauss_cdf(d / 2) - 1 - 0.1) < 1e-14
    assert perturb_shift(0.0, 2.0) == 0.0


def test_perturb_zero_delta_is_exact():
    assert perturbed_sup_error(DEFAULT_PARAMS, 200, 0.0, True) == 0.0
    assert perturbed_sup_error(DEFAULT_PARAMS, 200, 0.0, False) == 0.0


def test_perturb_first_step_error_equals_delta():
    for delta in (0.1, 0.01):
        assert abs(perturbed_sup_error(DEFAULT_PARAMS, 2, delta, True) - delta) < 1e-12


def test_perturb_table_shape():
    tab = perturb(ExperimentConfig(T=(200,), deltas=(0.1, 0.01)))
    assert len(tab.rows) == 4
    assert set(tab.summary["constants"]) == {"alternating", "same-sign"}


def test_prop3_constants():
    a, T_k, rho_k = prop3_constants(DEFAULT_PARAMS, 0.2, 1000)
    st = stationary(DEFAULT_PARAMS)
    traj = kalman_exact(DEFAULT_PARAMS, 1000)
    assert T_k is not None
    for t in range(T_k, 1001):
        assert traj.filtering(t).mass(-a, a) > 0.2 and traj.predictive(t).mass(-a, a) > 0.2
    # a is minimal up to the nudge for the wider limiting law
    assert abs(2 * gauss_cdf(a / (1 + 1e-6) / math.sqrt(st.pred_var_inf)) - 1 - 0.2) < 1e-12
    assert 0 < rho_k <= 0.5
    assert prop3_constants(DEFAULT_PARAMS, 1.0, 10) == (math.inf, None, 0.0)


def test_run_traces_and_table():
    cfg = ExperimentConfig(N=(64,), T=(50,), with_discrepancy=True)
    traces = run_traces(cfg)
    assert set(traces) == {"iid", "scrambled"}
    tab = trace_table(traces["scrambled"], "run")
    assert len(tab.rows) == 50 and "disc_filter" in tab.rows[0]
    assert tab.summary["delta_N"] == delta_envelope(64)


def test_extinction_small():
    tab = extinction(ExperimentConfig(N=(4,), T=(101,), replicates=20))
    s = tab.summary
    assert s["step_observations"] == 20 * 100
    assert abs(s["lower_bound"] - 0.01409780458717385) < 1e-15
    assert s["extinction_frequency"] >= s["lower_bound"]
    assert tab.ok


def test_sweep_degenerate_kappa():
    tab = sweep(ExperimentConfig(N=(4, 8), T=(10, 20), replicates=10, kappa=1.0))
    assert all(r["p_hat"] == 0.0 for r in tab.rows)
    assert tab.summary["minimal_N"] == {"10": 4, "20": 4}


def test_sweep_shared_matches_independent_shape():
    base = ExperimentConfig(N=(16, 64), T=(10, 100), replicates=20, kappa=0.2)
    a = sweep(base)
    b = sweep(base.with_(shared_horizons=True))
    assert [(r["N"], r["T"]) for r in a.rows] == [(r["N"], r["T"]) for r in b.rows]
    # shared horizons make the estimate monotone in T per N
    for N in (16, 64):
        ps = [r["p_hat"] for r in b.rows if r["N"] == N]
        assert ps == sorted(ps)


def test_sqmc_uniform_small():
    tab = sqmc_uniform(ExperimentConfig(N=(16, 64), T=(300,), keys=3, t_split=100, compare_iid=True))
    per = tab.summary["per_N"]
    assert per["64"]["max_sup"] < per["16"]["max_sup"]
    assert "iid_max_sup" in per["64"]
    assert set(tab.summary["flatness"]) == {"16", "64"}


def test_dkw_small():
    tab = dkw(ExperimentConfig(N=(64, 100), T=(3,), replicates=50, keys=2, mode="both"))
    assert tab.summary["scrambled_checks"] == 2 * 2  # only N=64 qualifies
    assert tab.ok


def test_qmc_verify_passes_and_reports_envelope():
    tab = qmc_verify(ExperimentConfig(N=(16, 64, 100), keys=3))
    assert tab.ok
    assert tab.summary["delta_N"]["100"] == delta_envelope(100)


def test_qmc_verify_flags_corrupted_matrix():
    cols = list(DEFAULT_NET.cols2)
    cols[1] = cols[0]
    tab = qmc_verify(ExperimentConfig(N=(16,), keys=1), net=DigitalNet2D(cols2=tuple(cols)))
    assert not tab.ok


def test_results_independent_of_worker_count(monkeypatch):
    cfg = ExperimentConfig(N=(8,), T=(30,), replicates=6)
    monkeypatch.setenv("PFHORIZON_WORKERS", "1")
    a = sweep(cfg)
    monkeypatch.setenv("PFHORIZON_WORKERS", "2")
    b = sweep(cfg)
    assert a.rows == b.rows


def test_bad_worker_env(monkeypatch):
    monkeypatch.setenv("PFHORIZON_WORKERS", "zero")
    with pytest.raises(ConfigError):
        sweep(ExperimentConfig(N=(4,), T=(5,), replicates=2))
