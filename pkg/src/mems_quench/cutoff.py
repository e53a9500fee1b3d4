"""Smooth cut-off and nonuniform-grid difference stencils."""

from __future__ import annotations

import numpy as np


def _bump_parts(t):
    """f(t) = exp(-1/t) for t > 0 with f', f''; zero otherwise."""
    t = np.asarray(t, dtype=float)
    pos = t > 0
    tt = np.where(pos, t, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        f = np.where(pos, np.exp(-1.0 / tt), 0.0)
    f1 = np.where(pos, f / tt**2, 0.0)
    f2 = np.where(pos, f * (1.0 / tt**4 - 2.0 / tt**3), 0.0)
    return f, f1, f2


def chi0(x, order: int = 0):
    """Smooth cut-off: 1 on [0, 1], 0 on [2, inf), C-infinity in between.

    ``order`` selects the function (0) or its first (1) or second (2) derivative.
    Built as ``a / (a + b)`` with ``a = f(2 - x)``, ``b = f(x - 1)``, ``f(t) = exp(-1/t)``.
    """
    x = np.abs(np.asarray(x, dtype=float))
    a, a1, a2 = _bump_parts(2.0 - x)
    b, b1, b2 = _bump_parts(x - 1.0)
    # d/dx of a(2-x) flips the sign of the first derivative
    a1 = -a1
    den = a + b
    den_safe = np.where(den > 0, den, 1.0)
    g = np.where(x <= 1.0, 1.0, np.where(x >= 2.0, 0.0, a / den_safe))
    if order == 0:
        return g
    num1 = a1 * b - a * b1
    g1 = np.where((x > 1.0) & (x < 2.0), num1 / den_safe**2, 0.0)
    if order == 1:
        return g1
    if order == 2:
        num2 = a2 * b - a * b2
        d1 = a1 + b1
        g2 = num2 / den_safe**2 - 2.0 * num1 * d1 / den_safe**3
        return np.where((x > 1.0) & (x < 2.0), g2, 0.0)
    raise ValueError("order must be 0, 1 or 2")


def smoothstep5(t):
    """Quintic blend 0 -> 1 on [0, 1] with matching first and second derivatives."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t**2)


def radial_gradient(values, r) -> np.ndarray:
    """Second-order centered derivative on a nonuniform radial grid.

    The origin uses the symmetry condition (zero slope); the last node is one-sided.
    """
    v = np.asarray(values, dtype=float)
    r = np.asarray(r, dtype=float)
    g = np.gradient(v, r, edge_order=2)
    if r[0] == 0.0:
        g[0] = 0.0
    return g


def fv_laplacian_bands(r, n: int):
    """Finite-volume radial Laplacian bands for nodes 0..M-1 of grid ``r``."""
    r = np.asarray(r, dtype=float)
    h = np.diff(r)
    faces = 0.5 * (r[1:] + r[:-1])
    vol = np.empty(h.size)
    vol[0] = faces[0] ** n / n
    vol[1:] = (faces[1:] ** n - faces[:-1] ** n) / n
    cond = faces ** (n - 1) / h
    lower = np.zeros(h.size)
    diag = -cond / vol
    upper = cond / vol
    diag[1:] -= cond[:-1] / vol[1:]
    lower[1:] = cond[:-1] / vol[1:]
    return lower, diag, upper


def radial_laplacian_values(values, r, n: int) -> np.ndarray:
    """Radial Laplacian at nodes 0..M-1; the last entry is NaN (no outer neighbour)."""
    v = np.asarray(values, dtype=float)
    lower, diag, upper = fv_laplacian_bands(r, n)
    out = np.full(v.shape, np.nan)
    out[:-1] = diag * v[:-1] + upper * v[1:]
    out[1:-1] += lower[1:] * v[:-2]
    return out
