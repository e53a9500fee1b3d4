import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mems_quench.core import Field, ModelParams, make_graded_grid
from mems_quench.theta import (
    ThetaTrace,
    alpha_of_u,
    finite_diff_theta_prime,
    integrate_radial,
    solve_theta_cubic,
    solve_theta_general,
    theta_cubic_bracketed,
    theta_cubic_closed_form,
    theta_of_mu,
    theta_of_u,
)


def numpy_root(A, B):
    """Independent oracle: companion-matrix roots of theta^3 - B^2 theta^2 - 2AB theta - A^2."""
    r = np.roots([1.0, -(B**2), -2.0 * A * B, -(A**2)])
    real = r[np.abs(r.imag) < 1e-9].real
    return float(real.max())


def test_integrate_zero_and_one():
    g = make_graded_grid(200, 1.0)
    p = ModelParams(dim=1)
    assert integrate_radial(Field(g, np.zeros(g.size)), p) == 0.0
    assert integrate_radial(Field(g, np.ones(g.size)), p) == pytest.approx(2.0, rel=1e-14)


def test_integrate_r_squared_in_3d():
    g = make_graded_grid(2000, 1.0)
    val = integrate_radial(Field(g, g.nodes**2), ModelParams(dim=3))
    assert val == pytest.approx(4.0 * math.pi / 5.0, abs=1e-6)


@pytest.mark.parametrize("A, B, expected", [(1.0, 0.0, 1.0), (8.0, 0.0, 4.0)])
def test_cubic_trivial_roots(A, B, expected):
    assert solve_theta_cubic(A, B) == pytest.approx(expected, rel=1e-14)


def test_cubic_A1_B1_in_bracket():
    th = solve_theta_cubic(1.0, 1.0)
    assert 2.0 < th < 2.2
    assert th == pytest.approx(numpy_root(1.0, 1.0), rel=1e-12)
    assert th**3 - th**2 - 2 * th - 1 == pytest.approx(0.0, abs=1e-12)


@given(A=st.floats(1.0, 1e3), B=st.floats(0.0, 1e2))
def test_cubic_matches_companion_oracle(A, B):
    th = solve_theta_cubic(A, B)
    assert th == pytest.approx(numpy_root(A, B), rel=1e-8)
    assert abs(th**3 - (A + B * th) ** 2) <= 1e-11 * th**3


@given(A=st.floats(1.0, 10.0), B1=st.floats(0.0, 10.0), dB=st.floats(1e-3, 5.0))
def test_cubic_root_increasing_in_B(A, B1, dB):
    assert theta_cubic_closed_form(A, B1 + dB) > theta_cubic_closed_form(A, B1)


def test_cubic_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_theta_cubic(0.5, 1.0)
    with pytest.raises(ValueError):
        solve_theta_cubic(2.0, -1.0)


def test_general_exponents_root():
    th = solve_theta_general(2.0, 0.5, 3.0, 2.0)
    assert th**2 == pytest.approx(2.0 + 0.5 * th, rel=1e-13)


def test_theta_of_mu_examples():
    assert theta_of_mu(5.0, ModelParams(gamma=0.0)) == 1.0
    p = ModelParams(gamma=0.3, dim=2)
    assert theta_of_mu(0.0, p) == pytest.approx((1 + 0.3 * math.pi) ** (2 / 3), rel=1e-14)
    p = ModelParams(lam=1.0, gamma=1.0, dim=1, radius=0.5)
    assert theta_of_mu(1.0, p) == pytest.approx(numpy_root(2.0, 1.0), rel=1e-12)


def test_alpha_examples():
    g = make_graded_grid(64, 0.5)
    assert alpha_of_u(Field(g, np.full(g.size, 0.3)), ModelParams(lam=2.0, gamma=0.0, radius=0.5)) == 2.0
    p = ModelParams(lam=1.0, gamma=0.4, radius=0.5)
    assert alpha_of_u(Field(g, np.zeros(g.size)), p) == pytest.approx(1.4**-2, rel=1e-14)
    p = ModelParams(lam=1.0, gamma=1.0, dim=1, radius=0.5)
    assert alpha_of_u(Field(g, np.full(g.size, 0.5)), p) == pytest.approx(1.0 / 9.0, rel=1e-14)


def test_theta_of_u_matches_theta_of_mu():
    """Directly computed theta solves the fixed-point relation for its own mu."""
    p = ModelParams(lam=2.0, gamma=0.2, dim=2, radius=1.0)
    g = make_graded_grid(400, 1.0, 2.0)
    u = Field(g, 0.6 * (1 - g.nodes**2))
    th = theta_of_u(u, p)
    ubar = u.values / (1 - u.values)
    mu = p.lam_root * integrate_radial(Field(g, ubar), p) / th
    assert th == pytest.approx(theta_of_mu(mu, p), rel=1e-12)
    assert th >= 1.0


def test_theta_prime_examples():
    t = np.array([0.0, 0.1, 0.2])
    const = finite_diff_theta_prime(ThetaTrace.from_samples(t, np.zeros(3), np.full(3, 1.5)))
    np.testing.assert_array_equal(const.theta_prime, 0.0)
    lin = finite_diff_theta_prime(ThetaTrace.from_samples(t, np.zeros(3), 1 + t))
    np.testing.assert_allclose(lin.theta_prime, 1.0, rtol=1e-13)
    quad = finite_diff_theta_prime(ThetaTrace.from_samples(t, np.zeros(3), 1 + t**2))
    assert quad.theta_prime[1] == pytest.approx(0.2, rel=1e-13)


def test_trace_validation():
    with pytest.raises(ValueError):
        ThetaTrace.from_samples([0.0, 0.0], [0, 0], [1, 1])
    assert not ThetaTrace.from_samples([0.0, 1.0], [0, 0], [1, 0.5]).is_valid()
