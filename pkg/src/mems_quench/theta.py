"""The nonlocal coefficient: mass integrals, the theta root and alpha(t)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .core import Field, ModelParams, ball_volume, sphere_measure

ROOT_AGREEMENT = 1e-10


def integrate_radial(f: Field, params: ModelParams) -> float:
    """Simpson rule for the integral of a radial field over the ball."""
    v = np.asarray(f.values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite values in integrand")
    return radial_quadrature(v, f.grid.nodes, params.dim)


def radial_quadrature(values: np.ndarray, r: np.ndarray, n: int) -> float:
    # composite Simpson on the (possibly graded) nodes
    return sphere_measure(n) * float(simpson(values * r ** (n - 1), x=r))


def _theta_residual(theta: float, A: float, B: float) -> float:
    return theta**3 - (A + B * theta) ** 2


def theta_cubic_closed_form(A: float, B: float) -> float:
    """Radical formula for the positive root of theta^3 = (A + B theta)^2.

    Substituting theta = x + B^2/3 removes the quadratic term; the depressed
    cubic has a single real root because its discriminant is positive.
    """
    disc = A**3 * (27.0 * A + 4.0 * B**3) / 108.0
    half_q = B**6 / 27.0 + A * B**3 / 3.0 + A**2 / 2.0
    c1 = np.cbrt(half_q + math.sqrt(disc))
    return B**2 / 3.0 + c1 + (6.0 * A * B + B**4) / (9.0 * c1)


def theta_cubic_bracketed(A: float, B: float) -> float:
    # with theta = x^2 the root solves x^3 = A + B x^2, so A^{1/3} <= x <= A^{1/3} + B
    lo = A ** (2.0 / 3.0)
    hi = (A ** (1.0 / 3.0) + B) ** 2 * (1.0 + 1e-12)
    g_lo, g_hi = _theta_residual(lo, A, B), _theta_residual(hi, A, B)
    if g_lo >= 0:  # B = 0, up to rounding
        return lo
    if g_hi < 0:
        raise ArithmeticError(f"theta bracket failed for A={A}, B={B}")
    return brentq(_theta_residual, lo, hi, args=(A, B), xtol=1e-15, rtol=1e-15, maxiter=200)


def solve_theta_cubic(A: float, B: float) -> float:
    if not A >= 1 or not B >= 0:
        raise ValueError(f"need A >= 1 and B >= 0, got A={A}, B={B}")
    closed = theta_cubic_closed_form(A, B)
    ref = theta_cubic_bracketed(A, B)
    if abs(closed - ref) > ROOT_AGREEMENT * ref:
        raise ArithmeticError(f"radical root {closed} disagrees with bracketed root {ref}")
    return closed


def solve_theta_general(A: float, B: float, p: float, q: float) -> float:
    """Positive root of theta^{(p+1)/q} = A + B theta."""
    if p == 2 and q == 2:
        return solve_theta_cubic(A, B)
    k = (p + 1.0) / q
    if B == 0:
        return A ** (1.0 / k)
    g = lambda th: th**k - A - B * th
    lo = A ** (1.0 / k)
    hi = max(2.0 * lo, 1.0)
    while g(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise ArithmeticError("no theta root (need (p+1)/q > 1)")
    return brentq(g, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=400)


def theta_A(params: ModelParams) -> float:
    return 1.0 + params.gamma * ball_volume(params)


def theta_of_mu(mu: float, params: ModelParams) -> float:
    if not mu >= 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    B = params.gamma * mu / params.lam_root
    return solve_theta_general(theta_A(params), B, params.p_exp, params.q_exp)


def nonlocal_mass(u: Field, params: ModelParams) -> float:
    """1 + gamma * integral of 1/(1-u)."""
    v = np.asarray(u.values)
    if np.any(v >= 1):
        raise ValueError("u reached 1: quench already happened")
    if params.gamma == 0:
        return 1.0
    return 1.0 + params.gamma * radial_quadrature(1.0 / (1.0 - v), u.grid.nodes, params.dim)


def alpha_of_u(u: Field, params: ModelParams) -> float:
    return params.lam * nonlocal_mass(u, params) ** (-params.q_exp)


def theta_of_u(u: Field, params: ModelParams) -> float:
    """theta computed directly from u; equals theta_of_mu of the induced mass."""
    if params.gamma == 0:
        return 1.0
    return nonlocal_mass(u, params) ** (params.q_exp / (params.p_exp + 1.0))


@dataclass(frozen=True)
class ThetaTrace:
    """Samples of (t, mu, theta, theta') with NaN for a missing derivative."""

    t: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    theta_prime: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in (self.t, self.mu, self.theta, self.theta_prime)]
        if len({a.shape for a in arrays}) != 1:
            raise ValueError("trace columns must have equal length")
        if arrays[0].size > 1 and not np.all(np.diff(arrays[0]) > 0):
            raise ValueError("trace times must be strictly increasing")
        for name, a in zip(("t", "mu", "theta", "theta_prime"), arrays):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @classmethod
    def from_samples(cls, t, mu, theta, theta_prime=None) -> "ThetaTrace":
        t = np.asarray(t, dtype=float)
        if theta_prime is None:
            theta_prime = np.full(t.shape, np.nan)
        return cls(t, np.asarray(mu, float), np.asarray(theta, float), np.asarray(theta_prime, float))

    def __len__(self):
        return self.t.size

    def is_valid(self) -> bool:
        return bool(np.all(self.theta >= 1.0) and np.all(self.mu >= 0.0))


def finite_diff_theta_prime(trace: ThetaTrace) -> ThetaTrace:
    if len(trace) < 2:
        raise ValueError("need at least two samples for a derivative")
    t, th = trace.t, trace.theta
    h = np.diff(t)
    dth = np.diff(th)
    d = np.empty_like(th)
    d[0], d[-1] = dth[0] / h[0], dth[-1] / h[-1]
    if t.size > 2:
        # three-point stencil written in differences: exact zero on constants, exact on quadratics
        h0, h1 = h[:-1], h[1:]
        d[1:-1] = (h0**2 * dth[1:] + h1**2 * dth[:-1]) / (h0 * h1 * (h0 + h1))
    return ThetaTrace(trace.t, trace.mu, trace.theta, d)
