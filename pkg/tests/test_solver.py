import math

import numpy as np
import pytest

from mems_quench.core import Field, ModelParams, RunConfig, make_graded_grid
from mems_quench.solver import (
    SolverAbort,
    estimate_from_center,
    estimate_quench_time,
    rhs_u,
    run_to_quench,
    stable_dt,
    step,
)


def flat(grid, c):
    return Field(grid, np.full(grid.size, c), 0.0)


def test_rhs_zero_field_is_lambda():
    g = make_graded_grid(64, 1.0)
    r = rhs_u(flat(g, 0.0), ModelParams(lam=1.7), RunConfig())
    np.testing.assert_allclose(r.values[:-1], 1.7, rtol=1e-15)


def test_rhs_diffusion_off_constant():
    g = make_graded_grid(32, 1.0)
    r = rhs_u(flat(g, 0.4), ModelParams(lam=1.0), RunConfig(diffusion_enabled=False))
    np.testing.assert_allclose(r.values, 0.6**-2, rtol=1e-14)


def test_rhs_cosine_eigenfunction():
    def err(M):
        g = make_graded_grid(M, 1.0)
        u = Field(g, 0.5 * np.cos(math.pi * g.nodes / 2.0))
        r = rhs_u(u, ModelParams(), RunConfig(source_enabled=False))
        return np.max(np.abs(r.values[:-1] + (math.pi / 2) ** 2 * u.values[:-1]))

    e1, e2 = err(100), err(200)
    assert e1 < 1e-3
    assert e1 / e2 > 3.5  # second order


def test_step_unchanged_without_source():
    g = make_graded_grid(32, 1.0)
    u, _ = step(flat(g, 0.0), ModelParams(), RunConfig(source_enabled=False))
    np.testing.assert_array_equal(u.values, 0.0)


def test_single_rk4_step_matches_ode():
    g = make_graded_grid(16, 1.0)
    cfg = RunConfig(diffusion_enabled=False, scheme="rk4", source_safety=1.0)
    u, dt = step(flat(g, 0.0), ModelParams(), cfg, dt_cap=1e-3)
    assert dt == 1e-3
    exact = 1.0 - (1.0 - 3e-3) ** (1.0 / 3.0)
    np.testing.assert_allclose(u.values, exact, atol=1e-12, rtol=0)


def test_near_quench_dt_bound():
    g = make_graded_grid(32, 1.0)
    v = np.zeros(g.size)
    v[0] = 0.99
    cfg = RunConfig()
    assert stable_dt(v, g, ModelParams(), cfg) <= cfg.source_safety * 1e-6 / 2.0 * (1 + 1e-12)


def test_ode_quench_time(ode_run):
    params, trace, est = ode_run
    assert trace.status == "quenched"
    assert est.T_hat == pytest.approx(1.0 / 3.0, abs=1e-4)
    assert est.slope == pytest.approx(-3.0, rel=1e-3)
    assert est.theta_star_hat == pytest.approx(1.0, rel=1e-4)


def test_ode_quench_time_scales_with_initial_value():
    g = make_graded_grid(16, 1.0)
    cfg = RunConfig(diffusion_enabled=False, scheme="rk4")
    tr = run_to_quench(flat(g, 0.5), ModelParams(lam=2.0), cfg)
    T = estimate_quench_time(tr, ModelParams(lam=2.0)).T_hat
    assert T == pytest.approx(0.5**3 / 6.0, rel=1e-3)


def test_diffusion_run_quenches_at_origin():
    g = make_graded_grid(200, 2.0, 1.5)
    u0 = flat(g, 0.0).with_values(np.where(g.nodes < 2.0, 0.0, 0.0))
    tr = run_to_quench(u0, ModelParams(lam=5.0, radius=2.0), RunConfig())
    assert tr.status == "quenched"
    assert set(tr.argmax[-5:]) == {0}
    for snap in tr.snapshots:
        assert np.all(np.isfinite(snap.values))
        assert snap.values.min() >= 0.0 and snap.values.max() <= 1.0 - 0.5 * tr.quench_stop


def test_constructed_run_quenches_at_origin(constructed_run):
    tr = constructed_run.trace
    assert tr.status == "quenched"
    assert tr.argmax[-1] == 0


def test_max_steps_status():
    g = make_graded_grid(32, 1.0)
    tr = run_to_quench(flat(g, 0.0), ModelParams(), RunConfig(max_steps=5, diffusion_enabled=False, scheme="rk4"))
    assert tr.status == "max_steps"


def test_synthetic_center_series():
    t = np.linspace(0.0, 0.2 - 1e-9, 20001)
    gap = (0.2 - t) ** (1.0 / 3.0)
    est = estimate_from_center(t, gap)
    assert est.T_hat == pytest.approx(0.2, abs=1e-6)
    # gap = k^{1/k} tau^{1/k} / theta* with k = 3
    assert est.theta_star_hat == pytest.approx(3.0 ** (1.0 / 3.0), rel=1e-9)


def test_constant_center_series_rejected():
    with pytest.raises(ValueError):
        estimate_from_center(np.linspace(0, 1, 100), np.full(100, 0.01))


def test_solver_abort_carries_trace(monkeypatch):
    from mems_quench import solver

    calls = {"n": 0}
    real = solver._source

    def poisoned(v, grid, params):
        calls["n"] += 1
        out = real(v, grid, params)
        if calls["n"] > 40:
            out[3] = np.nan
        return out

    monkeypatch.setattr(solver, "_source", poisoned)
    g = make_graded_grid(32, 1.0)
    with pytest.raises(SolverAbort) as info:
        run_to_quench(flat(g, 0.0), ModelParams(), RunConfig(diffusion_enabled=False, scheme="rk4"))
    assert info.value.trace is not None
    assert info.value.trace.status == "aborted"
