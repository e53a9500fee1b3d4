"""Numerical laboratory for single-point quenching in a nonlocal MEMS model.

The physical problem on a ball of radius R is

    u_t = Delta u + lam (1 - u)^{-p} (1 + gamma * int (1 - u)^{-1})^{-q},  u = 0 on the boundary,

integrated up to touch-down, with diagnostics in similarity variables.
"""

__version__ = "0.1.0"

from .core import Field, ModelParams, RadialGrid, RunConfig, ball_volume, make_graded_grid
from .theta import (
    ThetaTrace,
    alpha_of_u,
    finite_diff_theta_prime,
    integrate_radial,
    solve_theta_cubic,
    theta_of_mu,
)
from .solver import (
    QuenchEstimate,
    SolutionTrace,
    estimate_quench_time,
    rhs_u,
    run_to_quench,
    step,
)
from .selfsim import (
    SelfSimFrame,
    phi_profile,
    potential_V,
    q_equation_residual,
    term_B,
    term_F,
    term_J,
    term_N,
    term_R,
    to_selfsim,
    u_to_ubar,
    ubar_to_U,
)
from .spectral import (
    HermiteBasis,
    SpectralComponents,
    build_basis,
    component_norms,
    decompose,
    inner_rho,
    rho_weight,
)
from .regions import (
    InitialDataParams,
    RegionReport,
    ShrinkParams,
    build_H_star,
    build_initial_U,
    check_membership,
    gamma_map,
    p1_radius,
    rescaled_U,
    t_of_x,
    theta0_fixed_point,
    u0_from_U0,
    u_hat,
)
from .verify import (
    ProfileReport,
    OdeTrendReport,
    final_profile_ratio,
    intermediate_profile_error,
    ode_trend_q012,
    stability_probe,
    theta_bounds_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]
