"""Shrinking-set geometry, the constructed initial data and the Gamma map.

Notation: ``k = p + 1``, ``b = k^2/(4p)``. Near the singularity (region P1)
the solution is compared with the profile in similarity variables; in the
intermediate region P2 a rescaled function is compared with the flat
solution ``Uhat(tau) = (k (1 - tau) + b K0^2/16)^{-1/k}``; in the regular
region P3 the solution stays close to its initial value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .core import Field, ModelParams, RadialGrid
from .cutoff import chi0, smoothstep5
from .selfsim import phi_profile, psi_cutoff
from .spectral import ComponentNorms, SpectralComponents, build_basis, component_norms, decompose
from .theta import integrate_radial, theta_of_mu

MAX_T = math.exp(-2.0)


@dataclass(frozen=True)
class ShrinkParams:
    T: float
    K0: float = 10.0
    eps0: float = 0.025
    alpha0: float = 0.05
    A: float = 30.0
    delta0: float = 0.05
    C0: float = 50.0
    eta0: float = 0.1
    M0: float = 20.0
    p_exp: float = 2.0

    def __post_init__(self):
        if not 0 < self.T < MAX_T:
            raise ValueError(f"T must lie in (0, e^-2), got {self.T}")
        for name in ("K0", "eps0", "alpha0", "A", "delta0", "C0", "eta0", "M0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.delta0 > 0.5 * u_hat_value(0.0, self.K0, self.p_exp) * (1 + 1e-12):
            raise ValueError("delta0 must not exceed Uhat(0)/2")

    @classmethod
    def defaults(cls, T: float, params: ModelParams, **overrides) -> "ShrinkParams":
        K0 = overrides.pop("K0", 10.0)
        M0 = overrides.pop("M0", 20.0)
        values = dict(
            T=T,
            K0=K0,
            M0=M0,
            eps0=min(params.radius / 8.0, 1.0 / (2.0 * M0)),
            delta0=0.5 * u_hat_value(0.0, K0, params.p_exp),
            p_exp=params.p_exp,
        )
        values.update(overrides)
        return cls(**values)

    @property
    def s0(self) -> float:
        return -math.log(self.T)

    def with_T(self, T: float) -> "ShrinkParams":
        return replace(self, T=T)


@dataclass(frozen=True)
class InitialDataParams:
    d0: float = 0.0
    d1: tuple = (0.0,)

    def __post_init__(self):
        d1 = tuple(float(v) for v in np.atleast_1d(self.d1))
        object.__setattr__(self, "d1", d1)
        if abs(self.d0) > 2 or any(abs(v) > 2 for v in d1):
            raise ValueError("initial-data parameters must satisfy |d0|, |d1_i| <= 2")

    def d1_array(self, n: int) -> np.ndarray:
        d1 = np.zeros(n)
        d1[: min(n, len(self.d1))] = self.d1[:n]
        return d1


def p1_radius(t: float, sp: ShrinkParams) -> float:
    if not t < sp.T:
        raise ValueError("t must precede T")
    tau = sp.T - t
    return sp.K0 * math.sqrt(tau * abs(math.log(tau)))


def _p2_map(tau, K0):
    return 0.25 * K0 * math.sqrt(tau * abs(math.log(tau)))


def t_of_x(absx: float, sp: ShrinkParams):
    """Solve ``absx = (K0/4) sqrt(tau |ln tau|)`` for tau in (0, T].

    Returns ``(t_x, rho_x) = (T - tau, tau)``. Bisection runs in ln(tau),
    where the map is monotone because T < e^-2.
    """
    if not absx > 0:
        raise ValueError("absx must be positive")
    top = _p2_map(sp.T, sp.K0)
    if absx > top * (1 + 1e-14):
        raise ValueError(f"|x| = {absx} beyond the P2 range (max {top})")
    if absx >= top:
        return 0.0, sp.T
    lo, hi = -745.0, math.log(sp.T)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if _p2_map(math.exp(mid), sp.K0) < absx:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * max(1.0, abs(mid)):
            break
    tau = math.exp(0.5 * (lo + hi))
    return sp.T - tau, tau


def u_hat_value(tau, K0: float, p_exp: float = 2.0):
    k = p_exp + 1.0
    b = k**2 / (4.0 * p_exp)
    base = k * (1.0 - np.asarray(tau, dtype=float)) + b * K0**2 / 16.0
    if np.any(base <= 0):
        raise ValueError("nonpositive base in Uhat")
    return base ** (-1.0 / k)


def u_hat(tau, sp: ShrinkParams, params: ModelParams):
    return u_hat_value(tau, sp.K0, params.p_exp)


def U_field(u: Field, theta: float, params: ModelParams) -> Field:
    v = np.asarray(u.values)
    return u.with_values(params.lam_root * v / (1.0 - v) / theta)


class _TraceInterpolator:
    """Cubic-in-r, linear-in-t interpolation of U from a solution trace."""

    def __init__(self, trace, params: ModelParams):
        self.trace = trace
        self.params = params
        self.times = trace.snapshot_times
        self.r = trace.grid.nodes
        self._cache = {}

    def theta(self, t):
        tt = self.trace.theta_trace
        return float(np.interp(t, tt.t, tt.theta))

    def _spline(self, k):
        if k not in self._cache:
            snap = self.trace.snapshots[k]
            U = U_field(snap, self.theta(snap.time), self.params)
            self._cache[k] = CubicSpline(self.r, U.values)
        return self._cache[k]

    def __call__(self, r, t, nu: int = 0):
        times = self.times
        if t < times[0] - 1e-15 or t > times[-1] + 1e-15:
            raise ValueError(f"t={t} outside the stored snapshots [{times[0]}, {times[-1]}]")
        r = np.abs(np.asarray(r, dtype=float))
        if np.any(r > self.r[-1] * (1 + 1e-12)):
            raise ValueError("evaluation point outside the domain")
        k = int(np.searchsorted(times, t))
        if k < len(times) and times[k] == t or k == 0:
            return self._spline(min(k, len(times) - 1))(r, nu)
        k = min(k, len(times) - 1)
        t0, t1 = times[k - 1], times[k]
        a = (t - t0) / (t1 - t0)
        return (1 - a) * self._spline(k - 1)(r, nu) + a * self._spline(k)(r, nu)


def rescaled_U(trace, x: float, xi: float, tau: float, sp: ShrinkParams, params: ModelParams, _interp=None) -> float:
    """``rho^{1/k} U(|x + xi sqrt(rho)|, rho tau + t(x))``."""
    t_x, rho = t_of_x(abs(x), sp)
    interp = _interp or _TraceInterpolator(trace, params)
    point = abs(x + xi * math.sqrt(rho))
    return float(rho ** (1.0 / (params.p_exp + 1.0)) * interp(point, rho * tau + t_x))


@dataclass
class RegionReport:
    p1_pass: bool
    p2_pass: bool
    p3_pass: bool
    v_margins: dict
    p2_sup_deviation: float
    p2_gradient_margin: float
    p3_value_margin: float
    p3_gradient_margin: float
    details: dict = field(default_factory=dict)

    @property
    def member(self) -> bool:
        return self.p1_pass and self.p2_pass and self.p3_pass

    @property
    def min_margin(self) -> float:
        margins = list(self.v_margins.values())
        margins += [self.p2_gradient_margin, self.p3_value_margin, self.p3_gradient_margin]
        return float(min(margins))


def v_bounds(s: float, A: float) -> dict:
    """Upper bounds defining V_{K0,A}(s) for the six component norms."""
    return dict(
        q0=A / s**2,
        q1=A / s**2,
        q2=A**2 * math.log(s) / s**2,
        q_minus=A**2 / s**2,
        q_e=A**2 / math.sqrt(s),
        grad_perp=A / s**2,
    )


def v_margins(norms: ComponentNorms, s: float, A: float) -> dict:
    bounds = v_bounds(s, A)
    values = norms.as_dict()
    return {key: bounds[key] - values[key] for key in bounds}


def check_membership(
    trace,
    t: float,
    sp: ShrinkParams,
    components: SpectralComponents | ComponentNorms,
    params: ModelParams,
    s: float | None = None,
) -> RegionReport:
    """Evaluate items (i)-(iii) of the shrinking set at time t with quench time ``sp.T``.

    P3 compares the gradient with that of the initial data (not of the heat
    semigroup applied to it), with the tolerance widened to 2 eta0. ``s``
    overrides ``-ln(T - t)`` for item (i) when T - t underflows; it is only
    accepted without a trace.
    """
    if s is None:
        s = -math.log(sp.T - t)
    elif trace is not None:
        raise ValueError("an explicit s is only meaningful without a trace")
    norms = components if isinstance(components, ComponentNorms) else component_norms(components)
    margins = v_margins(norms, s, sp.A)
    p1 = all(m >= 0 for m in margins.values())

    interp = _TraceInterpolator(trace, params) if trace is not None else None
    k = params.p_exp + 1.0
    sup_dev, grad_margin = 0.0, math.inf
    lattice = 0
    lower = upper = 0.0
    if interp is not None:
        lower = 0.25 * sp.K0 * math.sqrt((sp.T - t) * abs(math.log(sp.T - t)))
        upper = min(sp.eps0, _p2_map(sp.T, sp.K0))
    if interp is not None and lower < upper:
        for x in np.geomspace(lower, upper, 8):
            t_x, rho = t_of_x(float(x), sp)
            tau = (t - t_x) / rho
            width = sp.alpha0 * math.sqrt(abs(math.log(rho)))
            target = float(u_hat(tau, sp, params))
            for xi in np.linspace(-width, width, 9):
                point = abs(x + xi * math.sqrt(rho))
                if point > trace.grid.radius:
                    continue
                val = rho ** (1.0 / k) * float(interp(point, t))
                grad = rho ** (1.0 / k) * math.sqrt(rho) * abs(float(interp(point, t, 1)))
                sup_dev = max(sup_dev, abs(val - target))
                grad_margin = min(grad_margin, sp.C0 / math.sqrt(abs(math.log(rho))) - grad)
                lattice += 1
    p2 = sup_dev <= sp.delta0 and grad_margin >= 0
    if math.isinf(grad_margin):
        grad_margin = 0.0 if lattice == 0 else grad_margin

    value_margin = grad3_margin = math.inf
    if interp is not None:
        r = trace.grid.nodes
        region = r >= sp.eps0 / 4.0
        now, start = interp(r[region], t), interp(r[region], trace.snapshot_times[0])
        dnow, dstart = interp(r[region], t, 1), interp(r[region], trace.snapshot_times[0], 1)
        value_margin = sp.eta0 - float(np.max(np.abs(now - start)))
        grad3_margin = 2.0 * sp.eta0 - float(np.max(np.abs(dnow - dstart)))
    p3 = value_margin >= 0 and grad3_margin >= 0
    return RegionReport(
        p1_pass=p1,
        p2_pass=p2,
        p3_pass=p3,
        v_margins=margins,
        p2_sup_deviation=sup_dev,
        p2_gradient_margin=float(grad_margin),
        p3_value_margin=float(value_margin),
        p3_gradient_margin=float(grad3_margin),
        details=dict(s=s, p2_lattice_points=lattice, norms=norms.as_dict()),
    )


def h_star_values(r, params: ModelParams) -> np.ndarray:
    """H* on radii r: the cusp profile inside, a quintic fade to zero at R/2."""
    r = np.asarray(r, dtype=float)
    p = params.p_exp
    k = p + 1.0
    c = k**2 / (8.0 * p)
    inner = min(params.radius / 4.0, 0.5)
    outer = params.radius / 2.0
    out = np.zeros_like(r)
    ok = (r > 0) & (r < outer) & (r != 1.0)
    rr = r[ok]
    cap = (c * rr**2 / np.abs(np.log(rr))) ** (-1.0 / k)
    fade = 1.0 - smoothstep5((rr - inner) / (outer - inner))
    out[ok] = cap * fade
    return out


def build_H_star(params: ModelParams, grid: RadialGrid) -> Field:
    return Field(grid, h_star_values(grid.nodes, params))


def initial_U_values(x, d: InitialDataParams, sp: ShrinkParams, params: ModelParams) -> np.ndarray:
    """Constructed initial data at points ``x`` of shape (N, n) (or radii for d1 = 0).

    A final factor ``chi0(|x| / (R/2))`` brings the data to zero at the
    boundary; it equals one wherever the other cut-offs are nontrivial as
    soon as ``2 sqrt(T) |ln T| <= R/2``.
    """
    n = params.dim
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        pts = np.zeros((x.size, n))
        pts[:, 0] = x
    else:
        pts = x
    r = np.sqrt(np.sum(pts**2, axis=1))
    T = sp.T
    L = abs(math.log(T))
    z = pts / math.sqrt(T * L)
    zabs = np.sqrt(np.sum(z**2, axis=1))
    chi1 = chi0(r / (math.sqrt(T) * L))
    bump = d.d0 + z @ d.d1_array(n)
    core = phi_profile(r / math.sqrt(T), sp.s0, params) + bump * chi0(zabs / (sp.K0 / 32.0))
    k = params.p_exp + 1.0
    U = T ** (-1.0 / k) * core * chi1 + h_star_values(r, params) * (1.0 - chi1)
    U = U * chi0(r / (params.radius / 2.0))
    U[r >= params.radius] = 0.0
    return U


def build_initial_U(d: InitialDataParams, sp: ShrinkParams, params: ModelParams, grid: RadialGrid) -> Field:
    if np.any(np.array(d.d1) != 0):
        raise ValueError("radial fields need d1 = 0; use initial_U_values for the full data")
    inside = int(np.count_nonzero(grid.nodes <= math.sqrt(sp.T)))
    if inside < 8:
        raise ValueError(f"grid under-resolves sqrt(T): {inside} nodes inside")
    U = initial_U_values(grid.nodes, d, sp, params)
    if np.any(U < 0):
        raise ValueError("initial data became negative; reduce |d0|")
    return Field(grid, U, 0.0)


def theta0_fixed_point(U0: Field, params: ModelParams) -> float:
    if np.any(np.asarray(U0.values) < 0):
        raise ValueError("U0 must be nonnegative")
    return theta_of_mu(integrate_radial(U0, params), params)


def u0_from_U0(U0: Field, theta0: float, params: ModelParams) -> Field:
    if not theta0 >= 1:
        raise ValueError("theta0 must be >= 1")
    ubar = theta0 * np.asarray(U0.values) / params.lam_root
    return U0.with_values(ubar / (ubar + 1.0))


def constructed_u0(sp: ShrinkParams, params: ModelParams, grid: RadialGrid, d: InitialDataParams | None = None):
    """Convenience: (U0, theta0, u0) for the constructed data."""
    d = d or InitialDataParams(d1=(0.0,) * params.dim)
    U0 = build_initial_U(d, sp, params, grid)
    theta0 = theta0_fixed_point(U0, params)
    return U0, theta0, u0_from_U0(U0, theta0, params)


def initial_q(d: InitialDataParams, sp: ShrinkParams, params: ModelParams):
    """q(y, s0) = e^{-s0/k} U(y e^{-s0/2}) psi(y, s0) - phi(y, s0) as a callable."""
    s0 = sp.s0
    k = params.p_exp + 1.0
    n = params.dim

    def q(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rad = np.sqrt(np.sum(pts**2, axis=1))
        U = initial_U_values(pts * math.exp(-s0 / 2.0), d, sp, params)
        psi = psi_cutoff(rad, s0, sp.M0, n).psi
        return math.exp(-s0 / k) * U * psi - phi_profile(rad, s0, params)

    return q


def initial_y_nodes(grid: RadialGrid, sp: ShrinkParams, params: ModelParams) -> np.ndarray:
    """Similarity-variable nodes of the physical grid at s0 (mirrored for n = 1)."""
    y = grid.nodes * math.exp(sp.s0 / 2.0)
    if params.dim == 1:
        return np.concatenate([-y[:0:-1], y])
    return y


def initial_components(d: InitialDataParams, sp: ShrinkParams, params: ModelParams, grid: RadialGrid, basis=None) -> SpectralComponents:
    basis = basis or build_basis(params.dim, 6)
    return decompose(initial_q(d, sp, params), sp.s0, sp.K0, basis, y=initial_y_nodes(grid, sp, params))


def gamma_map(d: InitialDataParams, sp: ShrinkParams, params: ModelParams, grid: RadialGrid | None = None, basis=None):
    """(d0, d1) -> (q0, q1)(s0)."""
    if grid is None:
        from .core import make_graded_grid

        grid = make_graded_grid(400, params.radius, 2.0)
    c = initial_components(d, sp, params, grid, basis)
    return c.q0, c.q1.copy()
