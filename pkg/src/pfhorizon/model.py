"""Exact side of the scalar linear Gaussian filtering problem with all observations at zero.

Model::

    X_1 ~ N(mu1, sigma1_sq),  X_{t+1} = rho X_t + sigma W_{t+1},  Y_t = X_t + c^{-1/2} Z_t

With ``y_t = 0`` the potential is ``G(x) = exp(-c x^2 / 2)`` and the kernel is
``M(z, .) = N(rho z, sigma^2)``, so every predictive and filtering law is Gaussian.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate

from .randomness import StreamKey, derive_stream, gauss_cdf, gauss_quantile, phi_cdf

__all__ = [
    "ModelParams",
    "DEFAULT_PARAMS",
    "GaussianLaw",
    "FilterTrajectory",
    "QkSchedule",
    "StationaryQuantities",
    "kalman_exact",
    "qk_schedule",
    "stationary",
    "filter_via_qk",
    "gaussian_phi_step",
    "bayes_update",
    "h_eval",
    "h_variation",
    "h_pointwise_bound",
    "simulate_ssm",
    "fit_stability_rate",
]


@dataclass(frozen=True)
class ModelParams:
    rho: float = 0.9
    sigma: float = 1.0
    c: float = 1.0
    mu1: float = 0.0
    sigma1_sq: float = 1.0

    def __post_init__(self):
        for name in ("rho", "sigma", "c", "mu1", "sigma1_sq"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.c <= 0:
            raise ValueError("c must be > 0")
        if self.sigma1_sq <= 0:
            raise ValueError("sigma1_sq must be > 0")

    @property
    def initial_law(self) -> "GaussianLaw":
        return GaussianLaw(self.mu1, self.sigma1_sq)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


DEFAULT_PARAMS = ModelParams()


@dataclass(frozen=True)
class GaussianLaw:
    mean: float
    var: float

    def __post_init__(self):
        if not (self.var > 0 and math.isfinite(self.var)):
            raise ValueError("var must be positive and finite")
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def cdf(self, x):
        return gauss_cdf((np.asarray(x, dtype=np.float64) - self.mean) / self.std)

    def quantile(self, p):
        return self.mean + self.std * gauss_quantile(p)

    def mass(self, a: float, b: float) -> float:
        """Probability of the closed interval [a, b]."""
        s = self.std
        return max(phi_cdf((b - self.mean) / s) - phi_cdf((a - self.mean) / s), 0.0)


@dataclass(frozen=True)
class FilterTrajectory:
    """Exact laws for t = 1..T; row ``t - 1`` holds time ``t``."""

    pred_mean: np.ndarray
    pred_var: np.ndarray
    filt_mean: np.ndarray
    filt_var: np.ndarray

    @property
    def T(self) -> int:
        return self.pred_mean.shape[0]

    def predictive(self, t: int) -> GaussianLaw:
        self._check(t)
        return GaussianLaw(float(self.pred_mean[t - 1]), float(self.pred_var[t - 1]))

    def filtering(self, t: int) -> GaussianLaw:
        self._check(t)
        return GaussianLaw(float(self.filt_mean[t - 1]), float(self.filt_var[t - 1]))

    def _check(self, t):
        if not 1 <= t <= self.T:
            raise IndexError(f"t={t} outside 1..{self.T}")


def bayes_update(law: GaussianLaw, c: float) -> GaussianLaw:
    """Reweight ``law`` by ``exp(-c x^2 / 2)`` and renormalize."""
    k = 1.0 + c * law.var
    return GaussianLaw(law.mean / k, law.var / k)


def gaussian_phi_step(law: GaussianLaw, params: ModelParams) -> GaussianLaw:
    """One predictive-to-predictive step: Bayes update by G, then the kernel."""
    k = 1.0 + params.c * law.var
    return GaussianLaw(params.rho * law.mean / k,
                       params.rho ** 2 * law.var / k + params.sigma ** 2)


def kalman_exact(params: ModelParams, T: int) -> FilterTrajectory:
    if T < 1:
        raise ValueError("T must be >= 1")
    pm = np.empty(T)
    pv = np.empty(T)
    fm = np.empty(T)
    fv = np.empty(T)
    m, p = params.mu1, params.sigma1_sq
    rho, s2, c = params.rho, params.sigma ** 2, params.c
    for i in range(T):
        pm[i] = m
        pv[i] = p
        k = 1.0 + c * p
        fm[i] = m / k
        fv[i] = p / k
        m = rho * fm[i]
        p = rho * rho * fv[i] + s2
    return FilterTrajectory(pm, pv, fm, fv)


@dataclass(frozen=True)
class QkSchedule:
    """Parameters of the k-step operator ``Q^k(x', dx) ∝ G_{c_k}(x') N(rho_k x', sigma_sq_k)``."""

    c_k: np.ndarray
    rho_k: np.ndarray
    sigma_sq_k: np.ndarray

    @property
    def K(self) -> int:
        return self.c_k.shape[0] - 1


def qk_schedule(params: ModelParams, K: int) -> QkSchedule:
    if K < 1:
        raise ValueError("K must be >= 1")
    rho, s2, c = params.rho, params.sigma ** 2, params.c
    ck = np.zeros(K + 1)
    rk = np.ones(K + 1)
    sk = np.zeros(K + 1)
    for k in range(1, K + 1):
        d = 1.0 + (c + ck[k - 1]) * s2
        ck[k] = (c + ck[k - 1]) * rho * rho / d
        rk[k] = rk[k - 1] * rho / d
        sk[k] = sk[k - 1] + rk[k - 1] ** 2 * s2 / d
    return QkSchedule(ck, rk, sk)


@dataclass(frozen=True)
class StationaryQuantities:
    c_star: float
    sigma_inf_sq: float
    pred_var_inf: float
    rate_estimate: float | None = None

    @property
    def limit_law(self) -> GaussianLaw:
        return GaussianLaw(0.0, self.sigma_inf_sq)


def _c_star(params: ModelParams) -> float:
    rho2, s2, c = params.rho ** 2, params.sigma ** 2, params.c
    b = 1.0 + c * s2 - rho2
    disc = math.sqrt(b * b + 4.0 * c * s2 * rho2)
    # ρ² − (1 + cσ²) + √(...) rewritten to avoid cancellation when b > 0
    if b > 0:
        num = 4.0 * c * s2 * rho2 / (b + disc)
    else:
        num = disc - b
    return num / (2.0 * s2)


def _kalman_fixed_point(params: ModelParams, tol: float = 1e-15, max_iter: int = 100_000) -> float:
    p = params.sigma ** 2
    for _ in range(max_iter):
        v = p / (1.0 + params.c * p)
        p_next = params.rho ** 2 * v + params.sigma ** 2
        if abs(p_next - p) <= tol * p_next:
            p = p_next
            break
        p = p_next
    return p / (1.0 + params.c * p)


def stationary(params: ModelParams, tol: float = 1e-14, max_iter: int = 1_000_000) -> StationaryQuantities:
    """Fixed point ``c_star`` and the limiting filtering variance.

    The variance is the limit of the schedule's ``sigma_sq_k`` and is cross-checked
    against the Kalman steady state; disagreement beyond 1e-10 raises.
    """
    rho, s2, c = params.rho, params.sigma ** 2, params.c
    ck, rk, sk = 0.0, 1.0, 0.0
    for _ in range(max_iter):
        d = 1.0 + (c + ck) * s2
        inc = rk * rk * s2 / d
        sk += inc
        rk *= rho / d
        ck = (c + ck) * rho * rho / d
        if inc < tol:
            break
    else:
        raise RuntimeError("sigma_sq_k did not converge")
    v_kal = _kalman_fixed_point(params)
    if abs(sk - v_kal) > 1e-10 * max(1.0, v_kal):
        raise RuntimeError(f"stationary variance mismatch: series {sk!r}, Kalman {v_kal!r}")
    return StationaryQuantities(_c_star(params), sk, rho * rho * sk + s2)


def filter_via_qk(params: ModelParams, t: int, schedule: QkSchedule | None = None) -> GaussianLaw:
    """Filtering law at time ``t`` from the initial filtering law and the k-step operator."""
    if t < 2:
        raise ValueError("filter_via_qk needs t >= 2")
    if schedule is None or schedule.K < t - 1:
        schedule = qk_schedule(params, t - 1)
    k = t - 1
    first = bayes_update(params.initial_law, params.c)
    weighted = bayes_update(first, float(schedule.c_k[k])) if schedule.c_k[k] > 0 else first
    r = float(schedule.rho_k[k])
    return GaussianLaw(r * weighted.mean, r * r * weighted.var + float(schedule.sigma_sq_k[k]))


# ---------------------------------------------------------------------------
# test functions h_{a,r,s}(x) = Φ((a − r x)/s) − Φ(a/s)

def h_eval(a: float, r: float, s: float, x):
    if s <= 0:
        raise ValueError("s must be > 0")
    x = np.asarray(x, dtype=np.float64)
    out = np.asarray(gauss_cdf((a - r * x) / s) - phi_cdf(a / s))
    return float(out) if out.ndim == 0 else out


def h_pointwise_bound(r: float, s: float, x):
    return np.abs(r * np.asarray(x, dtype=np.float64)) / (s * math.sqrt(2.0 * math.pi))


def h_variation(a: float, r: float, s: float, width: float = 50.0) -> float:
    """Total variation of ``h`` over ``[-width s/|r|, width s/|r|]`` by adaptive quadrature of ``|h'|``."""
    if s <= 0:
        raise ValueError("s must be > 0")
    if r == 0:
        return 0.0
    lim = width * s / abs(r)
    peak = a / r

    def dh(x):
        z = (a - r * x) / s
        return abs(r) / s * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    pts = [p for p in (peak - 8 * s / abs(r), peak, peak + 8 * s / abs(r)) if -lim < p < lim]
    val, _ = integrate.quad(dh, -lim, lim, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val


# ---------------------------------------------------------------------------

def simulate_ssm(params: ModelParams, T: int, key: StreamKey, size: int | None = None):
    """Simulate hidden states and observations.

    Returns arrays of shape ``(T,)`` or ``(size, T)``.  Each path consumes ``2T``
    uniforms: ``T`` for the state noise then ``T`` for the observation noise.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    n = 1 if size is None else int(size)
    u = derive_stream(key).uniforms(2 * T * n).reshape(n, 2 * T)
    z = gauss_quantile(u)
    x = np.empty((n, T))
    x[:, 0] = params.mu1 + math.sqrt(params.sigma1_sq) * z[:, 0]
    for t in range(1, T):
        x[:, t] = params.rho * x[:, t - 1] + params.sigma * z[:, t]
    y = x + z[:, T:] / math.sqrt(params.c)
    if size is None:
        return x[0], y[0]
    return x, y


def fit_stability_rate(params: ModelParams, t_min: int = 10, t_max: int = 60):
    """Least-squares fit of log Kolmogorov distance between the filtering law and its limit.

    Returns ``(StationaryQuantities with rate_estimate set, slope, r_squared)``.
    """
    from .metrics import kolmogorov_gauss_gauss

    if not 1 <= t_min < t_max:
        raise ValueError("need 1 <= t_min < t_max")
    st = stationary(params)
    traj = kalman_exact(params, t_max)
    ts = np.arange(t_min, t_max + 1)
    dist = np.array([kolmogorov_gauss_gauss(traj.filtering(int(t)), st.limit_law) for t in ts])
    if np.any(dist <= 0):
        raise ValueError("distance reached zero inside the fit window; choose slower-mixing parameters")
    logd = np.log(dist)
    slope, intercept = np.polyfit(ts, logd, 1)
    resid = logd - (slope * ts + intercept)
    ss_tot = float(np.sum((logd - logd.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return replace(st, rate_estimate=float(math.exp(slope))), float(slope), r2
