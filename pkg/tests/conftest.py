import math

import numpy as np
import pytest

from mems_quench.core import ModelParams, RunConfig, make_graded_grid
from mems_quench.regions import ShrinkParams, U_field, constructed_u0
from mems_quench.selfsim import to_selfsim
from mems_quench.solver import estimate_quench_time, run_to_quench


class ConstructedRun:
    """The reference quench: n = 1, R = 1, lambda = 1, gamma = 0.1, T = 0.05, M = 2000."""

    def __init__(self):
        self.params = ModelParams(lam=1.0, gamma=0.1, dim=1, radius=1.0)
        self.grid = make_graded_grid(2000, 1.0, 2.0)
        self.sp = ShrinkParams.defaults(0.05, self.params)
        self.U0, self.theta0, self.u0 = constructed_u0(self.sp, self.params, self.grid)
        self.trace = run_to_quench(self.u0, self.params, RunConfig())
        self.estimate = estimate_quench_time(self.trace, self.params)

    def frames_at(self, s_values):
        """Self-similar frames at exact s values, from a rerun that stops at those times."""
        T = self.estimate.T_hat
        times = tuple(T - math.exp(-s) for s in s_values)
        tr = run_to_quench(self.u0, self.params, RunConfig(snapshot_times=times))
        out = []
        for t in times:
            f = tr.snapshot_at(t, 1e-15)
            th = float(np.interp(f.time, tr.theta_trace.t, tr.theta_trace.theta))
            out.append(to_selfsim(U_field(f, th, self.params), f.time, T, self.sp.M0, th, self.params))
        return out


@pytest.fixture(scope="session")
def constructed_run():
    return ConstructedRun()


@pytest.fixture(scope="session")
def ode_run():
    params = ModelParams(lam=1.0, gamma=0.0, dim=1, radius=1.0)
    grid = make_graded_grid(16, 1.0)
    from mems_quench.core import Field

    u0 = Field(grid, np.zeros(grid.size), 0.0)
    cfg = RunConfig(diffusion_enabled=False, scheme="rk4")
    trace = run_to_quench(u0, params, cfg)
    return params, trace, estimate_quench_time(trace, params)
