"""Componentwise quasi-maximum-likelihood estimation of (rho_j, beta_(j), sigma_jj).

For fixed rho the likelihood is maximized exactly by regressing S(rho)Y_j on
the active covariates, so the search reduces to a one-dimensional
concentrated likelihood in rho.  The residual quadratic form is a degree-2
polynomial in rho, making each concentrated evaluation O(n) once the
spectrum of W is cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spatial
from .optim import grid_then_golden

_RIDGE = 1e-10


class SingularDesignError(np.linalg.LinAlgError):
    """Active covariate matrix is rank deficient beyond jitter repair."""


@dataclass
class ComponentEstimate:
    """Fitted parameters and optimizer diagnostics for one response column."""

    rho_hat: float
    beta_hat: np.ndarray
    sigma_hat: float
    loglik: float
    iterations: int
    converged: bool
    boundary_hit: bool = False
    support: np.ndarray | None = None
    se_rho: float | None = None

    def __post_init__(self):
        if self.sigma_hat <= 0:
            raise ValueError("sigma_hat must be positive")
        if not np.isfinite(self.loglik):
            raise ValueError("loglik must be finite")


def loglik(rho: float, beta: np.ndarray, sigma: float, y: np.ndarray,
           X: np.ndarray, weights: spatial.SpatialWeights) -> float:
    """Quasi log-likelihood -(n/2)log(sigma) + log|S| - ||S y - X beta||^2 / (2 sigma)."""
    if sigma <= 0:
        return -np.inf
    n = y.shape[0]
    r = spatial.apply_s(weights, rho, y)
    if X.size:
        r = r - X @ beta
    return (-0.5 * n * np.log(sigma) + spatial.log_det_s(weights, rho)
            - float(r @ r) / (2.0 * sigma))


class ConcentratedSar:
    """Profile machinery for one response: caches W y, the design QR, and the
    quadratic coefficients of ||P_X^perp (y - rho W y)||^2."""

    def __init__(self, y: np.ndarray, X: np.ndarray, weights: spatial.SpatialWeights):
        self.y = np.asarray(y, dtype=float)
        self.X = np.asarray(X, dtype=float).reshape(len(y), -1)
        self.weights = weights
        self.n = len(y)
        self.Wy = weights.matrix @ self.y
        if self.X.shape[1]:
            q_mat, r_mat = np.linalg.qr(self.X)
            rdiag = np.abs(np.diag(r_mat))
            if rdiag.max() == 0.0:
                raise SingularDesignError("design matrix is zero")
            self._near_singular = rdiag.min() < 1e-10 * rdiag.max()
            self.Q = q_mat
            yp = self.y - q_mat @ (q_mat.T @ self.y)
            wp = self.Wy - q_mat @ (q_mat.T @ self.Wy)
        else:
            self._near_singular = False
            self.Q = None
            yp, wp = self.y, self.Wy
        self._a = float(yp @ yp)
        self._b = float(yp @ wp)
        self._c = float(wp @ wp)

    def sigma(self, rho: float) -> float:
        return max((self._a - 2.0 * rho * self._b + rho * rho * self._c) / self.n, 1e-300)

    def beta(self, rho: float) -> np.ndarray:
        if not self.X.shape[1]:
            return np.empty(0)
        sy = self.y - rho * self.Wy
        if self._near_singular:
            xtx = self.X.T @ self.X
            jitter = _RIDGE * max(np.trace(xtx) / xtx.shape[0], 1.0)
            return np.linalg.solve(xtx + jitter * np.eye(xtx.shape[0]), self.X.T @ sy)
        return np.linalg.lstsq(self.X, sy, rcond=None)[0]

    def concentrated(self, rho: float) -> float:
        return (-0.5 * self.n * np.log(self.sigma(rho))
                + spatial.log_det_s(self.weights, rho))


def profile_beta_sigma(rho: float, y: np.ndarray, X: np.ndarray,
                       weights: spatial.SpatialWeights) -> tuple[np.ndarray, float]:
    """Exact maximizers of the likelihood in (beta, sigma) for fixed rho."""
    prof = ConcentratedSar(y, X, weights)
    return prof.beta(rho), prof.sigma(rho)


def fit_component(y: np.ndarray, X: np.ndarray, weights: spatial.SpatialWeights,
                  rho_max: float = 0.99, grid_points: int = 41, tol: float = 1e-8,
                  support: np.ndarray | None = None) -> ComponentEstimate:
    """Maximize the concentrated likelihood over rho in (-rho_max, rho_max).

    `support` is bookkeeping only: the indices of X's columns within the full
    covariate matrix, carried through to the residual/report stage.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("non-finite values in inputs")
    if len(y) <= X.shape[1] + 2:
        raise ValueError("need n > s_j + 2 observations")
    prof = ConcentratedSar(y, X, weights)
    res = grid_then_golden(prof.concentrated, -rho_max, rho_max,
                           grid_points=grid_points, tol=tol)
    beta = prof.beta(res.x)
    sigma = prof.sigma(res.x)
    ll = loglik(res.x, beta, sigma, y, X, weights)
    return ComponentEstimate(rho_hat=res.x, beta_hat=beta, sigma_hat=sigma,
                             loglik=ll, iterations=res.iterations,
                             converged=res.converged, boundary_hit=res.boundary_hit,
                             support=support)


def fit_all(Y: np.ndarray, X: np.ndarray, supports, weights: spatial.SpatialWeights,
            **opts) -> list[ComponentEstimate]:
    """Fit every response column on its active covariate set."""
    Y = np.asarray(Y, dtype=float)
    out = []
    for j in range(Y.shape[1]):
        sup = np.asarray(supports[j], dtype=int) if supports is not None else np.arange(X.shape[1])
        out.append(fit_component(Y[:, j], X[:, sup], weights, support=sup, **opts))
    return out


def residuals(estimates: list[ComponentEstimate], Y: np.ndarray, X: np.ndarray,
              weights: spatial.SpatialWeights) -> np.ndarray:
    """Residual matrix with column j = S(rho_hat_j) Y_j - X_(j) beta_hat_j."""
    Y = np.asarray(Y, dtype=float)
    if len(estimates) != Y.shape[1]:
        raise ValueError("one estimate per response column required")
    out = np.empty_like(Y)
    for j, est in enumerate(estimates):
        r = spatial.apply_s(weights, est.rho_hat, Y[:, j])
        if est.beta_hat.size:
            sup = est.support if est.support is not None else np.arange(X.shape[1])
            r = r - X[:, sup] @ est.beta_hat
        out[:, j] = r
    return out
