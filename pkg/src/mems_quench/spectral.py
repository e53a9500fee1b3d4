"""Hermite analysis in the Gaussian-weighted space L^2_rho.

``rho(y) = exp(-|y|^2/4) / (4 pi)^{n/2}`` and the rescaled Hermite polynomials
``h_0 = 1, h_1 = y, h_{m+1} = y h_m - 2 m h_{m-1}`` satisfy
``L h_m = (1 - m/2) h_m`` for ``L = d^2/dy^2 - (y/2) d/dy + 1``.
Inner products use Gauss-Hermite nodes mapped by ``y = 2x``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite as _herm
from scipy.interpolate import CubicSpline
from scipy.special import roots_genlaguerre

from .core import Field
from .cutoff import chi0, radial_gradient

DEFAULT_NODES = 64
TENSOR_MAX_DIM = 3
WEIGHT_TOLERANCE = 1e-14


def rho_weight(y, n: int):
    """Gaussian weight; ``y`` is a point array of shape (..., n) or a radius."""
    y = np.asarray(y, dtype=float)
    if n > 1 and y.ndim >= 1 and y.shape[-1] == n:
        r2 = np.sum(y**2, axis=-1)
    else:
        r2 = y**2
    return np.exp(-r2 / 4.0) / (4.0 * math.pi) ** (n / 2.0)


def hermite_coefficients(max_degree: int):
    """Exact ascending coefficient tuples of h_0..h_max."""
    polys = [(Fraction(1),), (Fraction(0), Fraction(1))]
    for m in range(1, max_degree):
        prev, cur = polys[m - 1], polys[m]
        nxt = [Fraction(0)] * (m + 2)
        for i, c in enumerate(cur):
            nxt[i + 1] += c
        for i, c in enumerate(prev):
            nxt[i] -= 2 * m * c
        polys.append(tuple(nxt))
    return polys[: max_degree + 1]


def apply_L_exact(coeffs):
    """L = d^2/dy^2 - (y/2) d/dy + 1 on an exact coefficient tuple."""
    c = list(coeffs)
    out = [Fraction(0)] * len(c)
    for i, a in enumerate(c):
        out[i] += a
        if i >= 1:
            out[i] -= Fraction(i, 2) * a
        if i >= 2:
            out[i - 2] += i * (i - 1) * a
    return tuple(out)


@dataclass(frozen=True)
class HermiteBasis:
    dim: int
    max_degree: int
    polys: tuple
    multi_indices: tuple

    def eigen_residual(self, m: int):
        """Coefficients of L h_m - (1 - m/2) h_m, all zero for a correct basis."""
        lh = apply_L_exact(self.polys[m])
        lam = 1 - Fraction(m, 2)
        return tuple(a - lam * b for a, b in zip(lh, self.polys[m]))

    def eval_1d(self, m: int, y):
        c = [float(a) for a in self.polys[m]]
        return np.polynomial.polynomial.polyval(np.asarray(y, dtype=float), c)

    def eval(self, beta, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.ones(points.shape[0])
        for i, b in enumerate(beta):
            if b:
                out = out * self.eval_1d(b, points[:, i])
        return out

    @staticmethod
    def norm_sq(beta) -> float:
        return float(np.prod([2.0**b * math.factorial(b) for b in beta]))


def build_basis(n: int, max_degree: int = 6) -> HermiteBasis:
    if max_degree < 3:
        raise ValueError("max_degree must be at least 3")
    if n < 1:
        raise ValueError("dimension must be positive")
    polys = hermite_coefficients(max_degree)
    betas = tuple(
        sorted(
            (b for b in itertools.product(range(max_degree + 1), repeat=n) if sum(b) <= max_degree),
            key=lambda b: (sum(b), tuple(-x for x in b)),
        )
    ) if n <= TENSOR_MAX_DIM else tuple(b for b in _radial_indices(n, max_degree))
    return HermiteBasis(n, max_degree, tuple(polys), betas)


def _radial_indices(n, max_degree):
    yield (0,) * n
    yield (2,) + (0,) * (n - 1)


@lru_cache(maxsize=8)
def _tensor_rule(n: int, nodes: int):
    x, w = _herm.hermgauss(nodes)
    pts = np.array(list(itertools.product(2.0 * x, repeat=n)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1) / math.pi ** (n / 2.0)
    return pts, wts


@lru_cache(maxsize=8)
def _radial_rule(n: int, nodes: int):
    """Radial rule for integrals of f(|y|) rho(y): substitute t = |y|^2/4."""
    t, w = roots_genlaguerre(nodes, n / 2.0 - 1.0)
    return 2.0 * np.sqrt(t), w / math.gamma(n / 2.0)


def _as_callable(f, n: int, outside=None):
    """Turn a Field, a (y, values) pair, a basis index or a callable into g(points)."""
    if callable(f):
        return f, math.inf
    if isinstance(f, Field):
        return _spline_callable(f.grid.nodes, f.values, n, outside)
    if isinstance(f, tuple) and len(f) == 2:
        return _spline_callable(np.asarray(f[0]), np.asarray(f[1]), n, outside)
    if np.isscalar(f):
        c = float(f)
        return (lambda pts: np.full(np.atleast_2d(pts).shape[0], c)), math.inf
    raise TypeError(f"cannot interpret {type(f).__name__} as a function")


def _spline_callable(y, v, n, outside):
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    signed = y[0] < 0
    if signed and n != 1:
        raise ValueError("signed y nodes are only meaningful for n = 1")
    spline = CubicSpline(y, v)
    lo, hi = (y[0], y[-1]) if signed else (0.0, y[-1])
    extent = min(-lo, hi) if signed else hi

    def g(points):
        pts = np.atleast_2d(points)
        coord = pts[:, 0] if signed else np.sqrt(np.sum(pts**2, axis=1))
        inside = (coord >= lo) & (coord <= hi)
        out = np.empty(coord.shape)
        out[inside] = spline(coord[inside])
        if np.any(~inside):
            if outside is None:
                out[~inside] = 0.0
            else:
                out[~inside] = outside(np.abs(coord[~inside]))
        return out

    return g, (math.inf if outside is not None else extent)


def _check_extent(extent, n, nodes):
    if math.isinf(extent):
        return
    pts, wts = _tensor_rule(min(n, TENSOR_MAX_DIM), nodes) if n <= TENSOR_MAX_DIM else (None, None)
    if pts is None:
        r, w = _radial_rule(n, nodes)
        lost = float(np.sum(w[r > extent]))
    else:
        lost = float(np.sum(wts[np.sqrt(np.sum(pts**2, axis=1)) > extent]))
    if lost > WEIGHT_TOLERANCE:
        raise ValueError(f"grid extent {extent:.4g} leaves quadrature weight {lost:.3g} uncovered")


def _basis_value(g, basis: HermiteBasis | None, n):
    if isinstance(g, tuple) and all(isinstance(b, (int, np.integer)) for b in g) and len(g) == n:
        b = basis if basis is not None else build_basis(n, max(3, sum(g)))
        return (lambda pts: b.eval(g, pts)), math.inf
    return None


def inner_rho(f, g, n: int, nodes: int = DEFAULT_NODES, basis: HermiteBasis | None = None, outside=None) -> float:
    """Weighted inner product. ``g`` may also be a multi-index tuple naming h_beta."""
    fg = _basis_value(f, basis, n) or _as_callable(f, n, outside)
    gg = _basis_value(g, basis, n) or _as_callable(g, n, outside)
    _check_extent(min(fg[1], gg[1]), n, nodes)
    if n <= TENSOR_MAX_DIM:
        pts, wts = _tensor_rule(n, nodes)
        return float(np.sum(wts * fg[0](pts) * gg[0](pts)))
    r, w = _radial_rule(n, nodes)
    pts = np.zeros((r.size, n))
    pts[:, 0] = r
    return float(np.sum(w * fg[0](pts) * gg[0](pts)))


def cutoff_chi(y, s: float, K0: float):
    return chi0(np.abs(np.asarray(y, dtype=float)) / (K0 * math.sqrt(s)))


@dataclass(frozen=True)
class SpectralComponents:
    q0: float
    q1: np.ndarray
    q2: np.ndarray
    y: np.ndarray
    q_minus: np.ndarray
    q_perp: np.ndarray
    q_e: np.ndarray
    s: float
    K0: float
    coeffs: dict = field(default_factory=dict)
    r_values: np.ndarray | None = None
    outside: object = None
    dim: int = 1

    def low_order(self, y=None):
        """q0 + q1.y + y^T q2 y - 2 Tr q2 along the first axis."""
        y = self.y if y is None else np.asarray(y, dtype=float)
        return self.q0 + self.q1[0] * y + self.q2[0, 0] * y**2 - 2.0 * np.trace(self.q2)


def _axis_points(y, n):
    pts = np.zeros((np.asarray(y).size, n))
    pts[:, 0] = y
    return pts


def decompose(r, s: float, K0: float, basis: HermiteBasis, y=None, outside=None, nodes: int = DEFAULT_NODES) -> SpectralComponents:
    """Split r = r_b + r_e with r_b = chi r and project r_b on the Hermite basis.

    ``r`` is a Field on a radial y-grid, a ``(y, values)`` pair (signed nodes
    allowed for n = 1) or a callable on points of shape (N, n). ``outside``
    supplies values beyond the grid as a function of |y|. Fields are reported
    along the first coordinate axis at the nodes ``y``.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    n = basis.dim
    func, extent = _as_callable(r, n, outside)
    _check_extent(extent, n, nodes)
    if y is None:
        if isinstance(r, Field):
            y = r.grid.nodes
        elif isinstance(r, tuple):
            y = np.asarray(r[0], dtype=float)
        else:
            raise ValueError("evaluation nodes y are required for callable input")
    y = np.asarray(y, dtype=float)

    def rb(pts):
        pts = np.atleast_2d(pts)
        return cutoff_chi(np.sqrt(np.sum(pts**2, axis=1)), s, K0) * func(pts)

    coeffs = {}
    if n <= TENSOR_MAX_DIM:
        pts, wts = _tensor_rule(n, nodes)
        vals = wts * rb(pts)
        for beta in basis.multi_indices:
            coeffs[beta] = float(np.sum(vals * basis.eval(beta, pts))) / basis.norm_sq(beta)
    else:
        rr, w = _radial_rule(n, nodes)
        pts = _axis_points(rr, n)
        vals = w * rb(pts)
        coeffs[(0,) * n] = float(np.sum(vals))
        # radial functions: <r, y_1^2 - 2> = <r, |y|^2 - 2n> / n
        coeffs[(2,) + (0,) * (n - 1)] = float(np.sum(vals * (rr**2 - 2.0 * n))) / n / 8.0
    zero = (0,) * n
    q0 = coeffs.get(zero, 0.0)
    q1 = np.zeros(n)
    q2 = np.zeros((n, n))
    for beta, c in coeffs.items():
        if sum(beta) == 1:
            q1[beta.index(1)] = c
        elif sum(beta) == 2:
            idx = [i for i, b in enumerate(beta) for _ in range(b)]
            i, j = idx
            if i == j:
                q2[i, i] = c
            else:
                q2[i, j] = q2[j, i] = c / 2.0
    if n > TENSOR_MAX_DIM:
        np.fill_diagonal(q2, q2[0, 0])
    pts_y = _axis_points(y, n)
    r_y = func(pts_y)
    chi_y = cutoff_chi(y, s, K0)
    rb_y = chi_y * r_y
    base = q0 + q1[0] * y
    quad = base + q2[0, 0] * y**2 - 2.0 * np.trace(q2)
    q_e = (1.0 - chi_y) * r_y
    return SpectralComponents(
        q0=q0,
        q1=q1,
        q2=q2,
        y=y,
        q_minus=rb_y - quad,
        q_perp=rb_y - base,
        q_e=q_e,
        s=float(s),
        K0=float(K0),
        coeffs=coeffs,
        r_values=r_y,
        outside=outside,
        dim=n,
    )


def reconstruct(c: SpectralComponents, basis: HermiteBasis):
    """Callable rebuilding chi r from the coefficients plus the non-polynomial remainder."""
    n = basis.dim
    poly_on_y = sum(coef * basis.eval(beta, _axis_points(c.y, n)) for beta, coef in c.coeffs.items())
    rb_y = c.q_minus + c.low_order()
    remainder = rb_y - poly_on_y
    signed = c.y[0] < 0
    spline = CubicSpline(c.y, remainder) if np.max(np.abs(remainder)) > 0 else None

    def g(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for beta, coef in c.coeffs.items():
            out += coef * basis.eval(beta, pts)
        if spline is not None:
            coord = pts[:, 0] if signed else np.sqrt(np.sum(pts**2, axis=1))
            out += np.where((coord >= c.y[0]) & (coord <= c.y[-1]), spline(np.clip(coord, c.y[0], c.y[-1])), 0.0)
        return out

    return g


@dataclass(frozen=True)
class ComponentNorms:
    q0: float
    q1: float
    q2: float
    q_minus: float
    q_e: float
    grad_perp: float

    def as_dict(self):
        return dict(self.__dict__)


def gradient_callable(c: SpectralComponents):
    """First-axis derivative of the decomposed function as a callable on points."""
    if c.r_values is None:
        return None
    y = c.y
    signed = y[0] < 0
    d = np.gradient(c.r_values, y, edge_order=2) if signed else radial_gradient(c.r_values, y)
    spline = CubicSpline(y, d)
    outside = c.outside
    h = 1e-6

    def g(points):
        pts = np.atleast_2d(points)
        if signed:
            return np.where((pts[:, 0] >= y[0]) & (pts[:, 0] <= y[-1]), spline(np.clip(pts[:, 0], y[0], y[-1])), 0.0)
        rad = np.sqrt(np.sum(pts**2, axis=1))
        inside = rad <= y[-1]
        dr = np.zeros(rad.shape)
        dr[inside] = spline(rad[inside])
        if outside is not None and np.any(~inside):
            ro = rad[~inside]
            dr[~inside] = (outside(ro + h) - outside(ro - h)) / (2 * h)
        with np.errstate(invalid="ignore", divide="ignore"):
            direction = np.where(rad > 0, pts[:, 0] / np.where(rad > 0, rad, 1.0), 0.0)
        return dr * direction

    return g


def component_norms(c: SpectralComponents, basis: HermiteBasis | None = None) -> ComponentNorms:
    weight = 1.0 + np.abs(c.y) ** 3
    grad_perp = 0.0
    if c.r_values is not None and np.any(c.r_values != 0):
        basis = basis or build_basis(c.dim, 3)
        g = gradient_callable(c)
        gc = decompose(g, c.s, c.K0, basis, y=c.y)
        grad_perp = float(np.max(np.abs(gc.q_perp) / weight))
    return ComponentNorms(
        q0=abs(c.q0),
        q1=float(np.max(np.abs(c.q1))) if c.q1.size else 0.0,
        q2=float(np.max(np.abs(c.q2))) if c.q2.size else 0.0,
        q_minus=float(np.max(np.abs(c.q_minus) / weight)),
        q_e=float(np.max(np.abs(c.q_e))),
        grad_perp=grad_perp,
    )
