"""scikit-learn style wrappers around the rate fit and the Hermite projection."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .solver import estimate_from_center
from .spectral import build_basis, decompose


def _as_times(X):
    X = check_array(X, ensure_2d=False, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError("expected a single time column")
        X = X[:, 0]
    return X


class QuenchRateEstimator(RegressorMixin, BaseEstimator):
    """Fit ``1 - u(0, t)`` samples to the quench law and predict the gap.

    ``fit(t, gap)`` sets ``T_hat_`` and ``theta_star_``; ``predict(t)``
    returns ``k^{1/k} (T_hat - t)^{1/k} / theta*`` (zero beyond T_hat).
    """

    def __init__(self, p_exp=2.0, quench_stop=1e-3, min_samples=20):
        self.p_exp = p_exp
        self.quench_stop = quench_stop
        self.min_samples = min_samples

    def fit(self, X, y):
        t = _as_times(X)
        t, gap = check_X_y(t.reshape(-1, 1), y, dtype=float, y_numeric=True)
        order = np.argsort(t[:, 0])
        est = estimate_from_center(t[order, 0], gap[order], self.p_exp, self.quench_stop, self.min_samples)
        self.estimate_ = est
        self.T_hat_ = est.T_hat
        self.theta_star_ = est.theta_star_hat
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "T_hat_")
        t = _as_times(X)
        k = self.p_exp + 1.0
        ahead = np.clip(self.T_hat_ - t, 0.0, None)
        return k ** (1.0 / k) * ahead ** (1.0 / k) / self.theta_star_


class HermiteProjector(TransformerMixin, BaseEstimator):
    """Project samples given on fixed y nodes onto the weighted Hermite basis.

    Each row of ``X`` holds the values of one radial (or, for dim = 1, signed)
    function at ``y_nodes``. ``transform`` returns the coefficients c_beta in
    the order of ``basis_.multi_indices``. ``outside`` is the value used
    beyond the nodes (a constant).
    """

    def __init__(self, y_nodes=None, dim=1, s=1e6, K0=10.0, max_degree=6, nodes=64, outside=0.0):
        self.y_nodes = y_nodes
        self.dim = dim
        self.s = s
        self.K0 = K0
        self.max_degree = max_degree
        self.nodes = nodes
        self.outside = outside

    def fit(self, X=None, y=None):
        if self.y_nodes is None:
            raise ValueError("y_nodes must be given")
        nodes = check_array(np.asarray(self.y_nodes, dtype=float).reshape(1, -1))[0]
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("y_nodes must be strictly increasing")
        self.y_ = nodes
        self.basis_ = build_basis(self.dim, self.max_degree)
        if X is not None:
            X = check_array(X, dtype=float)
            if X.shape[1] != nodes.size:
                raise ValueError(f"X has {X.shape[1]} columns for {nodes.size} nodes")
        self.n_features_in_ = nodes.size
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.y_.size:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.y_.size}")
        const = float(self.outside)
        outside = lambda r: np.full(np.shape(r), const)
        out = np.empty((X.shape[0], len(self.basis_.multi_indices)))
        for i, row in enumerate(X):
            c = decompose((self.y_, row), self.s, self.K0, self.basis_, outside=outside, nodes=self.nodes)
            out[i] = [c.coeffs[b] for b in self.basis_.multi_indices]
        return out

    def inverse_transform(self, C):
        """Polynomial part ``sum c_beta h_beta`` on the first axis at ``y_nodes``."""
        check_is_fitted(self, "basis_")
        C = check_array(C, dtype=float)
        pts = np.zeros((self.y_.size, self.dim))
        pts[:, 0] = self.y_
        H = np.column_stack([self.basis_.eval(b, pts) for b in self.basis_.multi_indices])
        return C @ H.T
