"""Method-of-lines integration of the physical equation up to quenching.

The radial Laplacian is a finite-volume stencil with faces at node midpoints.
It is second order on smoothly graded grids, reduces to ``n u_rr(0)`` at the
origin and gives an M-matrix, so implicit diffusion solves keep u >= 0.

Two schemes are available:

* ``imex``: Strang splitting with TR-BDF2 diffusion half steps around one RK4
  step of the source (the nonlocal factor is re-evaluated at every stage).
  With diffusion disabled this is plain RK4.
* ``rk4``: explicit RK4 on the full right-hand side, dt limited by the
  diffusive CFL bound ``cfl_safety * dr_min**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .cutoff import fv_laplacian_bands
from .core import Field, ModelParams, RadialGrid, RunConfig
from .theta import ThetaTrace, nonlocal_mass, radial_quadrature

TRBDF2_GAMMA = 2.0 - math.sqrt(2.0)
DT_FLOOR = 1e-16


class SolverAbort(RuntimeError):
    """Raised when the state becomes non-finite; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class QuenchReached(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RadialLaplacian:
    """Tridiagonal radial Laplacian on nodes 0..M-1 (node M is Dirichlet)."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros_like(v)
        out[:-1] = self.diag * v[:-1] + self.upper * v[1:]
        out[1:-1] += self.lower[1:] * v[:-2]
        return out

    def solve_shifted(self, rhs: np.ndarray, c: float) -> np.ndarray:
        """Solve (I - c L) x = rhs with x_M = 0."""
        m = self.diag.size
        ab = np.empty((3, m))
        ab[0, 0] = 0.0
        ab[0, 1:] = -c * self.upper[:-1]
        ab[1] = 1.0 - c * self.diag
        ab[2, :-1] = -c * self.lower[1:]
        ab[2, -1] = 0.0
        x = solve_banded((1, 1), ab, rhs[:-1])
        return np.append(x, 0.0)


@lru_cache(maxsize=16)
def radial_laplacian(grid: RadialGrid, n: int) -> RadialLaplacian:
    return RadialLaplacian(*fv_laplacian_bands(grid.nodes, n))


def laplacian_values(values: np.ndarray, grid: RadialGrid, n: int) -> np.ndarray:
    return radial_laplacian(grid, n).apply(np.asarray(values, dtype=float))


def _check_admissible(v: np.ndarray):
    if not np.all(np.isfinite(v)):
        raise SolverAbort("non-finite values in u")
    if np.any(v >= 1.0):
        raise ValueError("u reached 1")


def _source(v: np.ndarray, grid: RadialGrid, params: ModelParams) -> np.ndarray:
    # no Field here: intermediate stages may carry NaN, which the caller rejects
    alpha = params.lam
    if params.gamma > 0:
        mass = 1.0 + params.gamma * radial_quadrature(1.0 / (1.0 - v), grid.nodes, params.dim)
        alpha = params.lam * mass ** (-params.q_exp)
    return alpha * (1.0 - v) ** (-params.p_exp)


def _pinned(s: np.ndarray) -> np.ndarray:
    s[-1] = 0.0
    return s


def _rhs_values(v, grid, params, config) -> np.ndarray:
    out = np.zeros_like(v)
    if config.diffusion_enabled:
        out += laplacian_values(v, grid, params.dim)
    if config.source_enabled:
        out += _source(v, grid, params)
    if config.diffusion_enabled:
        out[-1] = 0.0  # Dirichlet node
    return out


def rhs_u(u: Field, params: ModelParams, config: RunConfig) -> Field:
    v = np.asarray(u.values, dtype=float)
    _check_admissible(v)
    return u.with_values(_rhs_values(v, u.grid, params, config))


def _rk4(v, dt, f):
    k1 = f(v)
    k2 = f(v + 0.5 * dt * k1)
    k3 = f(v + 0.5 * dt * k2)
    k4 = f(v + dt * k3)
    return v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _trbdf2(v, dt, lap: RadialLaplacian):
    g = TRBDF2_GAMMA
    v_g = lap.solve_shifted(v + 0.5 * g * dt * lap.apply(v), 0.5 * g * dt)
    denom = g * (2.0 - g)
    rhs = v_g / denom - (1.0 - g) ** 2 / denom * v
    return lap.solve_shifted(rhs, (1.0 - g) / (2.0 - g) * dt)


def stable_dt(u_values: np.ndarray, grid: RadialGrid, params: ModelParams, config: RunConfig) -> float:
    """Step size before rejection control."""
    gap = 1.0 - float(np.max(u_values))
    dt = config.source_safety * gap ** (params.p_exp + 1.0) / (params.lam * params.p_exp)
    if config.scheme == "rk4" and config.diffusion_enabled:
        dt = min(dt, config.cfl_safety * grid.min_spacing**2)
    if config.scheme == "imex" and config.diffusion_enabled:
        dt = min(dt, config.dt_max)
    return dt


def _advance(v, dt, grid, params, config):
    if config.scheme == "rk4" or not config.diffusion_enabled:
        f = lambda w: _rhs_values(w, grid, params, config)
        return _rk4(v, dt, f)
    lap = radial_laplacian(grid, params.dim)
    w = _trbdf2(v, 0.5 * dt, lap)
    if config.source_enabled:
        w = _rk4(w, dt, lambda z: _pinned(_source(z, grid, params)))
    return _trbdf2(w, 0.5 * dt, lap)


def _step_values(v, grid, params, config, dt_cap=None):
    dt = stable_dt(v, grid, params, config)
    if dt_cap is not None:
        dt = min(dt, dt_cap)
    ceiling = 1.0 - 0.5 * config.quench_stop
    rejected = 0
    while True:
        if dt < DT_FLOOR:
            raise QuenchReached(f"dt fell below {DT_FLOOR}")
        with np.errstate(all="ignore"):
            new = _advance(v, dt, grid, params, config)
        if not np.all(np.isfinite(new)):
            if 1.0 - np.max(v) < 10 * config.quench_stop:
                dt *= 0.5
                rejected += 1
                continue
            raise SolverAbort("non-finite values produced by a step")
        if np.min(new) >= 0.0 and np.max(new) < ceiling:
            return new, dt, rejected
        dt *= 0.5
        rejected += 1


def step(u: Field, params: ModelParams, config: RunConfig, dt_cap: float | None = None):
    """Advance one accepted step; returns ``(Field, dt_used)``."""
    v = np.asarray(u.values, dtype=float)
    _check_admissible(v)
    new, dt, _ = _step_values(v, u.grid, params, config, dt_cap)
    return u.with_values(new, u.time + dt), dt


@dataclass
class SolutionTrace:
    snapshots: list
    center_t: np.ndarray
    center_u: np.ndarray
    argmax: np.ndarray
    theta_trace: ThetaTrace
    status: str
    steps: int = 0
    rejections: int = 0
    min_u: float = 0.0
    quench_stop: float = 1e-3
    params: ModelParams | None = None
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def grid(self) -> RadialGrid:
        return self.snapshots[0].grid

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([f.time for f in self.snapshots])

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    @property
    def center_series(self):
        return np.column_stack([self.center_t, self.center_u])

    def snapshot_at(self, t: float, tol: float = 0.0) -> Field:
        times = self.snapshot_times
        k = int(np.argmin(np.abs(times - t)))
        if abs(times[k] - t) > tol:
            raise KeyError(f"no snapshot within {tol} of t={t}")
        return self.snapshots[k]

    def nearest_snapshot(self, t: float) -> Field:
        times = self.snapshot_times
        return self.snapshots[int(np.argmin(np.abs(times - t)))]


def run_to_quench(u0: Field, params: ModelParams, config: RunConfig) -> SolutionTrace:
    import time as _time

    start = _time.perf_counter()
    grid = u0.grid
    v = np.array(u0.values, dtype=float)
    _check_admissible(v)
    if np.any(v < 0):
        raise ValueError("initial data must be nonnegative")
    t = float(u0.time)
    targets = [s for s in config.snapshot_times if s > t]
    snaps = [u0]
    ct, cu, am, th_t, th_mu, th_th = [], [], [], [], [], []
    steps = rejections = 0
    min_u = float(np.min(v))
    lam_root = params.lam_root

    def record(values, time):
        ct.append(time)
        cu.append(values[0])
        am.append(int(np.argmax(values)))
        mass = nonlocal_mass(Field(grid, values), params)
        theta = 1.0 if params.gamma == 0 else mass ** (params.q_exp / (params.p_exp + 1.0))
        ubar_int = _ubar_integral(values, grid, params)
        th_t.append(time)
        th_th.append(theta)
        th_mu.append(lam_root * ubar_int / theta)

    record(v, t)
    status = "running"

    def finish(status_):
        theta_trace = ThetaTrace.from_samples(th_t, th_mu, th_th)
        return SolutionTrace(
            snapshots=snaps,
            center_t=np.array(ct),
            center_u=np.array(cu),
            argmax=np.array(am, dtype=int),
            theta_trace=theta_trace,
            status=status_,
            steps=steps,
            rejections=rejections,
            min_u=min_u,
            quench_stop=config.quench_stop,
            params=params,
            wall_time=_time.perf_counter() - start,
        )

    dt_prev = None
    while True:
        if 1.0 - np.max(v) < config.quench_stop:
            status = "quenched"
            break
        if steps >= config.max_steps:
            status = "max_steps"
            break
        cap = None if dt_prev is None else 2.0 * dt_prev
        target = targets[0] if targets else None
        if target is not None:
            cap = target - t if cap is None else min(cap, target - t)
        try:
            new, dt, rej = _step_values(v, grid, params, config, cap)
        except SolverAbort as exc:
            snaps.append(Field(grid, np.nan_to_num(v), t))
            raise SolverAbort(str(exc), finish("aborted")) from None
        except QuenchReached:
            status = "quenched"
            break
        rejections += rej
        steps += 1
        t = t + dt
        hit = target is not None and (target - t) <= 1e-14 * max(1.0, abs(target))
        if hit:
            t = target
            targets.pop(0)
        v = new
        dt_prev = dt
        min_u = min(min_u, float(np.min(v)))
        record(v, t)
        if hit or steps % config.output_cadence == 0:
            snaps.append(Field(grid, v, t))
    if snaps[-1].time != t:
        snaps.append(Field(grid, v, t))
    return finish(status)


def _ubar_integral(values, grid, params) -> float:

    return radial_quadrature(values / (1.0 - values), grid.nodes, params.dim)


@dataclass(frozen=True)
class QuenchEstimate:
    T_hat: float
    theta_star_hat: float
    fit_window: tuple
    fit_residual: float
    slope: float
    n_fit: int


def estimate_from_center(t, gap, p_exp: float = 2.0, quench_stop: float = 1e-3, min_samples: int = 20) -> QuenchEstimate:
    """Quench time and rate constant from samples of ``1 - u(0, t)``.

    The line fit of ``gap**(p+1)`` against t uses the terminal window
    ``gap <= 2 * max(quench_stop, min(gap))`` where the power law is closest
    to linear; theta* is the median of the rate-constant estimator over it.
    """
    t = np.asarray(t, dtype=float)
    gap = np.asarray(gap, dtype=float)
    eps = quench_stop
    broad = (gap >= eps * (1 - 1e-12)) & (gap <= 10.0 * math.sqrt(eps))
    if np.count_nonzero(broad) < min_samples:
        raise ValueError(f"need >= {min_samples} center samples in the fit window, got {np.count_nonzero(broad)}")
    floor = max(eps, float(np.min(gap[broad])))
    window = broad & (gap <= 2.0 * floor)
    if np.count_nonzero(window) < 8:
        window = broad
    k = p_exp + 1.0
    tw, yw = t[window], gap[window] ** k
    slope, intercept = np.polyfit(tw, yw, 1)
    if not slope * (tw[-1] - tw[0]) < -1e-9 * np.max(yw):
        raise ValueError("nonnegative slope: no quench trend in the center series")
    T_hat = -intercept / slope
    resid = yw - (slope * tw + intercept)
    fit_residual = float(np.sqrt(np.mean(resid**2)) / max(np.max(np.abs(yw)), 1e-300))
    ahead = T_hat - tw
    ok = ahead > 0
    if not np.any(ok):
        raise ValueError("fitted quench time precedes the fit window")
    est = k ** (1.0 / k) * ahead[ok] ** (1.0 / k) / gap[window][ok]
    return QuenchEstimate(
        T_hat=float(T_hat),
        theta_star_hat=float(np.median(est)),
        fit_window=(float(tw[0]), float(tw[-1])),
        fit_residual=fit_residual,
        slope=float(slope),
        n_fit=int(np.count_nonzero(window)),
    )


def estimate_quench_time(trace: SolutionTrace, params: ModelParams) -> QuenchEstimate:
    if trace.status != "quenched":
        raise ValueError(f"trace status is {trace.status!r}, not quenched")
    return estimate_from_center(trace.center_t, 1.0 - trace.center_u, params.p_exp, trace.quench_stop)
