"""Similarity variables, the blow-up profile and the terms of the q-equation.

With ``k = p + 1`` the transformation tower is

    ubar = u / (1 - u),  U = lam^{1/k} ubar / theta,
    W(y, s) = (T - t)^{1/k} U(x, t),  y = x / sqrt(T - t),  s = -ln(T - t),
    w = W psi,  psi(y, s) = chi0(M0 |y| e^{-s/2}),  q = w - phi.

The q-equation reads ``q_s = (L + V) q + B + R + N + J + F`` with
``L = Delta - y.grad/2 + 1``. All profile derivatives are analytic; only
derivatives of q and W use grid stencils.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .core import Field, ModelParams, RadialGrid
from .cutoff import chi0, radial_gradient, radial_laplacian_values

J_FLOOR = 1e-8


def u_to_ubar(u: Field) -> Field:
    v = np.asarray(u.values)
    if np.any(v >= 1):
        raise ValueError("u must stay below 1")
    return u.with_values(v / (1.0 - v))


def ubar_to_u(ubar: Field) -> Field:
    v = np.asarray(ubar.values)
    return ubar.with_values(v / (v + 1.0))


def ubar_to_U(ubar: Field, theta: float, params: ModelParams) -> Field:
    if not theta >= 1:
        raise ValueError(f"theta must be >= 1, got {theta}")
    return ubar.with_values(params.lam_root * np.asarray(ubar.values) / theta)


def U_to_ubar(U: Field, theta: float, params: ModelParams) -> Field:
    return U.with_values(theta * np.asarray(U.values) / params.lam_root)


def _k(params: ModelParams) -> float:
    return params.p_exp + 1.0


def profile_constants(params: ModelParams):
    """(b, c) in phi = (k + b|y|^2/s)^{-1/k} + c/s."""
    p = params.p_exp
    k = p + 1.0
    b = k**2 / (4.0 * p)
    c = params.kappa * params.dim / (2.0 * p)
    return b, c


def _check_s(s):
    if np.any(np.asarray(s) <= 0):
        raise ValueError("similarity time s must be positive")


def phi_profile(y, s, params: ModelParams):
    _check_s(s)
    k = _k(params)
    b, c = profile_constants(params)
    y = np.asarray(y, dtype=float)
    return (k + b * y**2 / s) ** (-1.0 / k) + c / s


@dataclass(frozen=True)
class ProfileDerivatives:
    phi: np.ndarray
    phi_r: np.ndarray
    laplacian: np.ndarray
    phi_s: np.ndarray


def phi_derivatives(y, s, params: ModelParams) -> ProfileDerivatives:
    """phi, its radial derivative, Laplacian and s-derivative in closed form."""
    _check_s(s)
    k = _k(params)
    n = params.dim
    b, c = profile_constants(params)
    y = np.asarray(y, dtype=float)
    base = k + b * y**2 / s
    g = base ** (-1.0 / k)
    g1 = base ** (-1.0 / k - 1.0)
    g2 = base ** (-1.0 / k - 2.0)
    over_r = -(2.0 * b / (k * s)) * g1  # phi_r / r, regular at r = 0
    phi_r = over_r * y
    phi_rr = over_r + (1.0 / k) * (1.0 / k + 1.0) * g2 * (2.0 * b * y / s) ** 2
    lap = phi_rr + (n - 1) * over_r
    phi_s = (b * y**2 / (k * s**2)) * g1 - c / s**2
    return ProfileDerivatives(g + c / s, phi_r, lap, phi_s)


def potential_V(y, s, params: ModelParams):
    k = _k(params)
    return (k + 1.0) * (phi_profile(y, s, params) ** k - 1.0 / k)


def eps_term(s, theta, params: ModelParams):
    """lam^{1/k} e^{-s/k} / theta; s = inf gives 0."""
    return params.lam_root * np.exp(-np.asarray(s, dtype=float) / _k(params)) / theta


def term_B(qv, phi, s, theta, params: ModelParams):
    k = _k(params)
    eps = eps_term(s, theta, params)
    qv = np.asarray(qv, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return (qv + phi + eps) ** (k + 1.0) - phi ** (k + 1.0) - (k + 1.0) * phi**k * qv


def term_J(q, gradq, y, s, theta, params: ModelParams, floor: float = J_FLOOR):
    """Returns ``(J, flagged)`` where flagged lists nodes whose denominator is below the floor."""
    eps = eps_term(s, theta, params)
    d = phi_derivatives(y, s, params)
    q = np.asarray(q, dtype=float)
    gradq = np.asarray(gradq, dtype=float)
    den_full = q + d.phi + eps
    den_phi = d.phi + eps
    flagged = np.flatnonzero(den_full < floor)
    safe = np.where(den_full < floor, floor, den_full)
    J = -2.0 * (gradq + d.phi_r) ** 2 / safe + 2.0 * d.phi_r**2 / den_phi
    return J, flagged


def term_R(y, s, theta, params: ModelParams):
    k = _k(params)
    eps = eps_term(s, theta, params)
    d = phi_derivatives(y, s, params)
    y = np.asarray(y, dtype=float)
    return (
        -d.phi_s
        + d.laplacian
        - 0.5 * y * d.phi_r
        - d.phi / k
        + d.phi ** (k + 1.0)
        - 2.0 * d.phi_r**2 / (d.phi + eps)
    )


def term_N(qv, phi, theta_ratio):
    return -theta_ratio * (np.asarray(qv) + np.asarray(phi))


@dataclass(frozen=True)
class CutoffDerivatives:
    psi: np.ndarray
    psi_r: np.ndarray
    laplacian: np.ndarray
    psi_s: np.ndarray


def psi_cutoff(y, s, M0: float, n: int) -> CutoffDerivatives:
    y = np.asarray(y, dtype=float)
    scale = M0 * math.exp(-s / 2.0)
    xi = scale * y
    c0, c1, c2 = chi0(xi), chi0(xi, 1), chi0(xi, 2)
    psi_r = c1 * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        over_r = np.where(y > 0, psi_r / np.where(y > 0, y, 1.0), 0.0)
    lap = c2 * scale**2 + (n - 1) * over_r
    return CutoffDerivatives(c0, psi_r, lap, -0.5 * xi * c1)


@dataclass(frozen=True)
class SelfSimFrame:
    s: float
    ygrid: RadialGrid
    W: np.ndarray
    w: np.ndarray
    q: np.ndarray
    theta_s: float
    M0: float
    t: float
    T: float

    @property
    def y(self) -> np.ndarray:
        return self.ygrid.nodes

    def outside_value(self, params: ModelParams):
        """q beyond the grid, where w vanishes."""
        return lambda yy: -phi_profile(yy, self.s, params)


def to_selfsim(U: Field, t: float, T: float, M0: float, theta: float, params: ModelParams) -> SelfSimFrame:
    if not t < T:
        raise ValueError("t must precede the quench time T")
    tau = T - t
    s = -math.log(tau)
    if s <= 0:
        raise ValueError("T - t must be below 1 so that s > 0")
    ygrid = U.grid.scaled(1.0 / math.sqrt(tau))
    W = tau ** (1.0 / _k(params)) * np.asarray(U.values, dtype=float)
    psi = psi_cutoff(ygrid.nodes, s, M0, params.dim).psi
    w = W * psi
    q = w - phi_profile(ygrid.nodes, s, params)
    return SelfSimFrame(s, ygrid, W, w, q, float(theta), float(M0), float(t), float(T))


def W_to_U(frame: SelfSimFrame, params: ModelParams, grid: RadialGrid) -> Field:
    tau = frame.T - frame.t
    return Field(grid, frame.W * tau ** (-1.0 / _k(params)), frame.t)


def term_F(frame: SelfSimFrame, params: ModelParams) -> np.ndarray:
    k = _k(params)
    y = frame.y
    eps = eps_term(frame.s, frame.theta_s, params)
    c = psi_cutoff(y, frame.s, frame.M0, params.dim)
    W = frame.W
    W_r = radial_gradient(W, y)
    w = W * c.psi
    w_r = c.psi * W_r + W * c.psi_r
    return (
        W * (c.psi_s - c.laplacian + 0.5 * y * c.psi_r)
        - 2.0 * c.psi_r * W_r
        + 2.0 * w_r**2 / (w + eps)
        - 2.0 * c.psi * W_r**2 / (W + eps)
        + c.psi * (W + eps) ** (k + 1.0)
        - (w + eps) ** (k + 1.0)
    )


@dataclass(frozen=True)
class ResidualField:
    y: np.ndarray
    values: np.ndarray
    s: float
    ds: float

    def norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def q_rhs(frame: SelfSimFrame, params: ModelParams, theta_ratio: float, stride: int = 1):
    """Right-hand side of the q-equation at the nodes ``frame.y[::stride]``."""
    y = frame.y[::stride]
    q = frame.q[::stride]
    W = frame.W[::stride]
    s, theta = frame.s, frame.theta_s
    d = phi_derivatives(y, s, params)
    q_r = radial_gradient(q, y)
    lap_q = radial_laplacian_values(q, y, params.dim)
    Lq = lap_q - 0.5 * y * q_r + q
    Vq = potential_V(y, s, params) * q
    J, flagged = term_J(q, q_r, y, s, theta, params)
    B = term_B(q, d.phi, s, theta, params)
    N = term_N(q, d.phi, theta_ratio)
    R = term_R(y, s, theta, params)
    sub = SelfSimFrame(s, RadialGrid(y), W, frame.w[::stride], q, theta, frame.M0, frame.t, frame.T)
    F = term_F(sub, params)
    return y, Lq + Vq + J + B + N + R + F, flagged


def q_equation_residual(frames, params: ModelParams, stride: int = 1, max_ds: float = 0.1) -> ResidualField:
    """``q_s - (L+V)q - J - B - N - R - F`` from two frames of one run.

    The time derivative is a forward difference; the later frame is
    interpolated onto the earlier frame's y nodes. The residual is returned on
    ``|y| <= e^{s/2} / (2 M0)`` where the cut-off is identically one.
    """
    a, b = frames
    if a.ygrid.size != b.ygrid.size or not np.allclose(
        a.y * math.exp(-a.s / 2.0), b.y * math.exp(-b.s / 2.0), rtol=1e-12, atol=0.0
    ):
        raise ValueError("frames come from different physical grids")
    ds = b.s - a.s
    if not 0 < ds <= max_ds * (1 + 1e-9):
        raise ValueError(f"frame spacing ds={ds} outside (0, {max_ds}]")
    theta_ratio = (b.theta_s - a.theta_s) / (ds * a.theta_s)
    y, rhs, _ = q_rhs(a, params, theta_ratio, stride)
    qb = CubicSpline(b.y[::stride], b.q[::stride])(y)
    dq = (qb - a.q[::stride]) / ds
    inner = y <= math.exp(a.s / 2.0) / (2.0 * a.M0)
    inner[-1] = False
    return ResidualField(y[inner], (dq - rhs)[inner], a.s, ds)
