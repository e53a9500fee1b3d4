"""Diagnostics comparing a computed quench with its predicted asymptotics.

Conventions (``k = p + 1``, ``b = k^2/(4p)``):

* rate constant: ``1 - u(0, t) ~ k^{1/k} (T - t)^{1/k} / theta*``;
* intermediate profile: ``(T-t)^{1/k} / (1-u) ~ theta* (k + b z^2)^{-1/k}``
  with ``z^2 = |x|^2 / ((T-t)|ln(T-t)|)``;
* final profile: ``1 - u*(x) ~ (1/theta*) [k^2/(8p) |x|^2/|ln|x||]^{1/k}``.

With gamma = 0 the rate constant is ``lam^{-1/k}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Field, ModelParams, RunConfig, ball_volume
from .solver import QuenchEstimate, SolutionTrace, estimate_quench_time, run_to_quench
from .theta import ThetaTrace, finite_diff_theta_prime, theta_A


@dataclass
class ProfileReport:
    s_values: np.ndarray
    scaled_sup_error: np.ndarray
    center_rate_slope: float
    final_ratio_series: np.ndarray
    theta_star_hat: float
    extra: dict = field(default_factory=dict)


@dataclass
class OdeTrendReport:
    s: np.ndarray
    q0_residual: np.ndarray
    q1_residual: np.ndarray
    q2_residual: np.ndarray

    @property
    def max_scaled(self) -> dict:
        return {
            "q0": float(np.max(np.abs(self.q0_residual))),
            "q1": float(np.max(np.abs(self.q1_residual))),
            "q2": float(np.max(np.abs(self.q2_residual))),
        }


def intermediate_profile(x, tau, theta_star: float, params: ModelParams):
    """Predicted ``(T-t)^{1/k} / (1-u)``."""
    p = params.p_exp
    k = p + 1.0
    b = k**2 / (4.0 * p)
    z2 = np.asarray(x, dtype=float) ** 2 / (tau * abs(math.log(tau)))
    return theta_star * (k + b * z2) ** (-1.0 / k)


def intermediate_profile_error(u: Field, T: float, theta_star: float, params: ModelParams, quench_stop: float = 1e-3):
    """Sup deviation from the intermediate profile and ``E = dev * sqrt|ln(T-t)|``.

    ``u`` carries its time; nodes with ``1 - u < quench_stop/2`` are skipped.
    """
    t = u.time
    if not t < T:
        raise ValueError("snapshot time must precede T")
    tau = T - t
    k = params.p_exp + 1.0
    v = np.asarray(u.values)
    gap = 1.0 - v
    keep = gap >= 0.5 * quench_stop
    observed = tau ** (1.0 / k) / gap[keep]
    predicted = intermediate_profile(u.grid.nodes[keep], tau, theta_star, params)
    dev = float(np.max(np.abs(observed - predicted)))
    return dev, dev * math.sqrt(abs(math.log(tau)))


def final_profile_shape(x, params: ModelParams):
    p = params.p_exp
    k = p + 1.0
    x = np.asarray(x, dtype=float)
    return (k**2 / (8.0 * p) * x**2 / np.abs(np.log(x))) ** (1.0 / k)


def final_profile_ratio(u_final: Field, theta_star: float, params: ModelParams, x_min: float, x_max: float) -> np.ndarray:
    """Rows ``(|x|, (1 - u*) theta* / shape(x))`` for nodes with x_min < |x| < x_max."""
    r = u_final.grid.nodes
    band = (r > x_min) & (r < x_max) & (r < 1.0)
    if not np.any(band):
        raise ValueError("no grid nodes in the admissible band")
    gap = 1.0 - np.asarray(u_final.values)[band]
    ratio = gap * theta_star / final_profile_shape(r[band], params)
    return np.column_stack([r[band], ratio])


def final_decade_mean(series: np.ndarray, x_max: float) -> float:
    """Mean ratio over the decade below ``x_max``."""
    x, ratio = series[:, 0], series[:, 1]
    sel = x >= x_max / 10.0
    if not np.any(sel):
        sel = np.ones_like(x, dtype=bool)
    return float(np.mean(ratio[sel]))


def center_rate_slope(trace: SolutionTrace, est: QuenchEstimate):
    """Log-log slope of 1-u(0,t) against T-t over the rate window, and its span in decades."""
    eps = trace.quench_stop
    gap = 1.0 - trace.center_u
    tau = est.T_hat - trace.center_t
    sel = (gap >= eps) & (gap <= 10.0 * math.sqrt(eps)) & (tau > 0)
    if np.count_nonzero(sel) < 3:
        raise ValueError("too few samples in the rate window")
    lt, lg = np.log(tau[sel]), np.log(gap[sel])
    slope = float(np.polyfit(lt, lg, 1)[0])
    decades = float((lt.max() - lt.min()) / math.log(10.0))
    return slope, decades


def ode_trend_q012(component_series, A: float = 1.0) -> OdeTrendReport:
    """Residuals of the finite-dimensional ODEs scaled by their predicted bounds.

    ``q0' - q0`` and ``q1' - q1/2`` are multiplied by s^2; ``q2' + 2 q2 / s`` by s^3/A.
    """
    if len(component_series) < 5:
        raise ValueError("need at least five samples")
    s = np.array([c[0] for c in component_series], dtype=float)
    if np.any(np.diff(s) <= 0):
        raise ValueError("s samples must increase")
    q0 = np.array([c[1].q0 for c in component_series])
    q1 = np.array([np.atleast_1d(c[1].q1)[0] for c in component_series])
    q2 = np.array([np.atleast_2d(c[1].q2)[0, 0] for c in component_series])
    d0 = np.gradient(q0, s, edge_order=2)
    d1 = np.gradient(q1, s, edge_order=2)
    d2 = np.gradient(q2, s, edge_order=2)
    return OdeTrendReport(
        s=s,
        q0_residual=(d0 - q0) * s**2,
        q1_residual=(d1 - 0.5 * q1) * s**2,
        q2_residual=(d2 + 2.0 * q2 / s) * s**3 / A,
    )


@dataclass
class ThetaReport:
    theta_min: float
    theta_max: float
    mu_min: float
    mu_max: float
    theta_at_least_one: bool
    derivative_scaled_max: float
    derivative_bounded: bool
    theta_T: float
    tail_width: float
    theta_star_lower_bound: float
    theta_star_hat: float | None
    nonlocal_active: bool = True

    @property
    def theta_star_above_bound(self) -> bool:
        """Strict inequality for gamma > 0; for gamma = 0 the bound is attained (to 1e-3)."""
        if self.theta_star_hat is None:
            return False
        if self.nonlocal_active:
            return self.theta_star_hat > self.theta_star_lower_bound
        return abs(self.theta_star_hat / self.theta_star_lower_bound - 1.0) <= 1e-3

    @property
    def passed(self) -> bool:
        ok = self.theta_at_least_one and self.mu_min >= 0 and self.derivative_bounded
        if self.theta_star_hat is not None:
            ok = ok and self.theta_star_above_bound
        return ok


def theta_star_lower_bound(params: ModelParams) -> float:
    k = params.p_exp + 1.0
    return theta_A(params) ** (params.q_exp / k) / params.lam ** (1.0 / k)


def theta_bounds_report(trace: ThetaTrace, est: QuenchEstimate | None, params: ModelParams, T: float | None = None) -> ThetaReport:
    th = np.asarray(trace.theta)
    mu = np.asarray(trace.mu)
    T = est.T_hat if est is not None else (T if T is not None else float(trace.t[-1]))
    tau = T - np.asarray(trace.t)
    ok = tau > 0
    scaled_max, bounded = 0.0, True
    if len(trace) >= 2 and np.any(ok):
        d = finite_diff_theta_prime(trace).theta_prime
        n = params.dim
        scaled = np.abs(d[ok]) * tau[ok] ** (-(3 * n - 8) / 6.0) * np.abs(np.log(tau[ok])) ** (-n)
        scaled = scaled[np.isfinite(scaled)]
        if scaled.size:
            scaled_max = float(np.max(scaled))
            ref = float(np.median(scaled))
            bounded = bool(scaled_max <= 10.0 * max(ref, 1e-300) or scaled_max == 0.0)
    tail = ok & (tau <= 10.0 * np.min(tau[ok])) if np.any(ok) else ok
    width = float(np.ptp(th[tail])) if np.any(tail) else 0.0
    return ThetaReport(
        theta_min=float(th.min()),
        theta_max=float(th.max()),
        mu_min=float(mu.min()),
        mu_max=float(mu.max()),
        theta_at_least_one=bool(np.all(th >= 1.0)),
        derivative_scaled_max=scaled_max,
        derivative_bounded=bounded,
        theta_T=float(th[-1]),
        tail_width=width,
        theta_star_lower_bound=theta_star_lower_bound(params),
        theta_star_hat=None if est is None else est.theta_star_hat,
        nonlocal_active=params.gamma > 0,
    )


@dataclass
class StabilityReport:
    base_status: str
    perturbed_status: str
    delta_T: float
    delta_theta_star: float
    quench_point_shift: float
    base_estimate: QuenchEstimate | None
    perturbed_estimate: QuenchEstimate | None


def perturb_initial_data(u0: Field, scale: float, seed: int = 0, modes: int = 3) -> Field:
    """Radial smooth perturbation with ``|delta| <= scale (1 - u0)``, vanishing where u0 does."""
    if not 0 <= scale <= 0.01:
        raise ValueError("perturbation scale must lie in [0, 0.01]")
    rng = np.random.default_rng(seed)
    r = u0.grid.nodes
    R = u0.grid.radius
    coeffs = rng.uniform(-1.0, 1.0, modes)
    shape = sum(c * np.cos((j + 0.5) * math.pi * r / R) for j, c in enumerate(coeffs))
    peak = np.max(np.abs(shape))
    shape = shape / peak if peak > 0 else shape
    v = np.asarray(u0.values)
    return u0.with_values(v + scale * (1.0 - v) * v * shape)


def stability_probe(base_u0: Field, perturbation_scale: float, params: ModelParams, config: RunConfig, seed: int = 0) -> StabilityReport:
    pert = perturb_initial_data(base_u0, perturbation_scale, seed)
    runs = []
    for u0 in (base_u0, pert):
        trace = run_to_quench(u0, params, config)
        est = estimate_quench_time(trace, params) if trace.status == "quenched" else None
        runs.append((trace, est))
    (tb, eb), (tp, ep) = runs
    r = base_u0.grid.nodes
    shift = abs(r[tp.argmax[-1]] - r[tb.argmax[-1]])
    dT = abs(ep.T_hat - eb.T_hat) if eb and ep else math.nan
    dth = abs(ep.theta_star_hat - eb.theta_star_hat) if eb and ep else math.nan
    return StabilityReport(tb.status, tp.status, dT, dth, float(shift), eb, ep)
