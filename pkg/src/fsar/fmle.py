"""Factor-augmented quasi-ML estimation and its plug-in sandwich covariance.

The estimated factors enter the componentwise SAR model as extra regressors;
the asymptotic covariance of the resulting estimator is a sandwich
Sigma2^{-1} (Sigma2 + Delta + SigmaQ) Sigma2^{-1} / n with three parts:

* Sigma2 - the information matrix of the augmented likelihood;
* Delta  - higher-moment corrections involving the third and fourth moments
  of the noise (zero under exact normality), estimated by plugging empirical
  moments of the residuals into the covariance identities for
  linear-quadratic forms;
* SigmaQ - the contribution of the estimation error in the factor regressors,
  evaluated by propagating per-node influence functions of the first-stage
  componentwise estimates through the cross-partial of the likelihood in the
  factor coordinates.

A numeric fallback (finite-difference Hessian + outer-product-of-scores) is
always computed alongside and disagreement beyond 10% on the spatial
coefficient's standard error is flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import spatial
from .cmle import ComponentEstimate, ConcentratedSar
from .optim import grid_then_golden

TAU_FLOOR = 1e-8
SE_DISAGREEMENT_TOL = 0.10


@dataclass
class SandwichBlocks:
    Sigma2: np.ndarray
    Delta: np.ndarray
    SigmaQ: np.ndarray

    @property
    def Sigma1(self) -> np.ndarray:
        return self.Sigma2 + self.Delta + self.SigmaQ


@dataclass
class AugmentedEstimate:
    """Fitted (rho, beta, btilde, tau) for one response plus diagnostics."""

    rho_hat: float
    beta_hat: np.ndarray
    btilde_hat: np.ndarray
    tau_hat: float
    loglik: float
    iterations: int
    converged: bool
    boundary_hit: bool = False
    support: np.ndarray | None = None
    covariance: np.ndarray | None = None
    se_rho: float | None = None
    blocks: SandwichBlocks | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tau_hat <= 0:
            raise ValueError("tau_hat must be positive")

    @property
    def g(self) -> int:
        return 2 + self.beta_hat.size + self.btilde_hat.size


def loglik_fmle(rho: float, beta: np.ndarray, btilde: np.ndarray, tau: float,
                y: np.ndarray, X: np.ndarray, Zhat: np.ndarray,
                weights: spatial.SpatialWeights) -> float:
    """-(n/2)log(tau) + log|S| - ||S y - X beta - Zhat btilde||^2 / (2 tau)."""
    if tau <= 0:
        return -np.inf
    n = y.shape[0]
    r = spatial.apply_s(weights, rho, y)
    if np.size(X):
        r = r - X @ beta
    r = r - Zhat @ btilde
    return (-0.5 * n * np.log(tau) + spatial.log_det_s(weights, rho)
            - float(r @ r) / (2.0 * tau))


def fit_fmle(y: np.ndarray, X: np.ndarray, Zhat: np.ndarray,
             weights: spatial.SpatialWeights, rho_max: float = 0.99,
             grid_points: int = 41, tol: float = 1e-8,
             support: np.ndarray | None = None) -> AugmentedEstimate:
    """Concentrated maximization over rho with (beta, btilde, tau) profiled.

    The covariance is not attached here; see :func:`sandwich_covariance`.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    Zhat = np.asarray(Zhat, dtype=float).reshape(len(y), -1)
    s, d_max = X.shape[1], Zhat.shape[1]
    if len(y) <= s + d_max + 2:
        raise ValueError("need n > s_j + d_max + 2 observations")
    D = np.hstack([X, Zhat])
    prof = ConcentratedSar(y, D, weights)

    def conc(rho: float) -> float:
        return (-0.5 * prof.n * np.log(max(prof.sigma(rho), TAU_FLOOR))
                + spatial.log_det_s(weights, rho))

    res = grid_then_golden(conc, -rho_max, rho_max, grid_points=grid_points, tol=tol)
    gamma = prof.beta(res.x)
    tau = max(prof.sigma(res.x), TAU_FLOOR)
    beta, btilde = gamma[:s], gamma[s:]
    ll = loglik_fmle(res.x, beta, btilde, tau, y, X, Zhat, weights)
    return AugmentedEstimate(rho_hat=res.x, beta_hat=beta, btilde_hat=btilde,
                             tau_hat=tau, loglik=ll, iterations=res.iterations,
                             converged=res.converged, boundary_hit=res.boundary_hit,
                             support=support)


# ---------------------------------------------------------------------------
# shared quasi-ML covariance machinery (used for both estimation stages)
# ---------------------------------------------------------------------------

def _dense_g(weights: spatial.SpatialWeights, rho: float) -> np.ndarray:
    """G(rho) = W (I - rho W)^{-1}, dense."""
    wd = weights.matrix.toarray()
    s_inv = np.linalg.inv(np.eye(weights.n) - rho * wd)
    return weights.matrix @ s_inv


def _spectrum_traces(weights: spatial.SpatialWeights, rho: float) -> tuple[float, float]:
    """(tr G, tr G^2) from the cached eigenvalues of W."""
    ev = weights.spectrum
    mu = ev / (1.0 - rho * ev)
    return float(np.sum(mu).real), float(np.sum(mu * mu).real)


def _information_matrix(G: np.ndarray, D: np.ndarray, Geta: np.ndarray,
                        tau: float) -> np.ndarray:
    """Expected-information blocks of the quasi-likelihood, order (rho, gamma, tau)."""
    n, m = D.shape
    g = m + 2
    tr_g = float(np.trace(G))
    tr_g2 = float(np.sum(G * G.T))
    tr_gtg = float(np.sum(G * G))
    out = np.zeros((g, g))
    out[0, 0] = (tr_g2 + tr_gtg + float(Geta @ Geta) / tau) / n
    out[0, 1:g - 1] = out[1:g - 1, 0] = D.T @ Geta / (n * tau)
    out[0, g - 1] = out[g - 1, 0] = tr_g / (n * tau)
    out[1:g - 1, 1:g - 1] = D.T @ D / (n * tau)
    out[g - 1, g - 1] = 1.0 / (2.0 * tau * tau)
    return out


def _higher_moment_matrix(G: np.ndarray, D: np.ndarray, Geta: np.ndarray,
                          resid: np.ndarray, tau: float) -> np.ndarray:
    """Plug-in higher-moment corrections; vanishes for normal residuals."""
    n, m = D.shape
    g = m + 2
    diag_g = np.diag(G)
    mu3 = float(np.mean(resid ** 3))
    mu4 = float(np.mean(resid ** 4))
    excess = mu4 - 3.0 * tau * tau
    out = np.zeros((g, g))
    out[0, 0] = (excess * float(diag_g @ diag_g)
                 + 2.0 * mu3 * float(diag_g @ Geta)) / (n * tau * tau)
    out[0, 1:g - 1] = out[1:g - 1, 0] = mu3 * (D.T @ diag_g) / (n * tau * tau)
    out[0, g - 1] = out[g - 1, 0] = (excess * float(np.sum(diag_g))
                                     + mu3 * float(np.sum(Geta))) / (2.0 * n * tau ** 3)
    out[1:g - 1, g - 1] = out[g - 1, 1:g - 1] = mu3 * D.sum(axis=0) / (2.0 * n * tau ** 3)
    out[g - 1, g - 1] = excess / (4.0 * tau ** 4)
    return out


def _per_node_scores(G: np.ndarray, D: np.ndarray, Geta: np.ndarray,
                     resid: np.ndarray, tau: float) -> np.ndarray:
    """Per-node score contributions at the fitted parameters (columns sum to ~0)."""
    n, m = D.shape
    g_resid_sym = 0.5 * (G @ resid + G.T @ resid)
    tr_g = float(np.trace(G))
    psi = np.empty((n, m + 2))
    psi[:, 0] = (Geta * resid + resid * g_resid_sym - tau * tr_g / n) / tau
    psi[:, 1:m + 1] = D * (resid / tau)[:, None]
    psi[:, m + 1] = (resid ** 2 - tau) / (2.0 * tau * tau)
    return psi


def _psd_floor(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() < 0:
        evals = np.clip(evals, 0.0, None)
        cov = (evecs * evals) @ evecs.T
    return 0.5 * (cov + cov.T)


def cmle_covariance(est: ComponentEstimate, y: np.ndarray, X: np.ndarray,
                    weights: spatial.SpatialWeights) -> np.ndarray:
    """Sandwich covariance of the componentwise estimator (no factor term);
    also fills est.se_rho."""
    y = np.asarray(y, dtype=float)
    D = np.asarray(X, dtype=float).reshape(len(y), -1)
    G = _dense_g(weights, est.rho_hat)
    resid = spatial.apply_s(weights, est.rho_hat, y)
    if D.shape[1]:
        resid = resid - D @ est.beta_hat
    eta = D @ est.beta_hat if D.shape[1] else np.zeros(len(y))
    Geta = G @ eta
    sigma2 = _information_matrix(G, D, Geta, est.sigma_hat)
    delta = _higher_moment_matrix(G, D, Geta, resid, est.sigma_hat)
    s2i = np.linalg.inv(sigma2)
    cov = _psd_floor(s2i @ (sigma2 + delta) @ s2i / len(y))
    est.se_rho = float(np.sqrt(cov[0, 0]))
    return cov


# ---------------------------------------------------------------------------
# factor-estimation-error term
# ---------------------------------------------------------------------------

@dataclass
class CmleInfluence:
    """Stacked per-node influence functions of all first-stage estimates.

    Column blocks run over components k; block k holds the influence columns
    of (rho_hat_k, beta_hat_k) next to the matching regressor columns
    [W Y_k, X_(k)].  Built once per dataset and shared by every component's
    SigmaQ evaluation.
    """

    Phi: np.ndarray          # (n, K) influence of (rho_k, beta_k) per node
    A: np.ndarray            # (n, K) stacked [W Y_k, X_(k)]
    col_comp: np.ndarray     # (K,) component index of each column
    M: np.ndarray            # (p, d_max) projection matrix
    Mexp: np.ndarray         # (K, d_max) M row per column
    phi_d: np.ndarray        # (n,) sum_k Phi_k d_k with d_k = A_k' (Zhat M_k)/n
    Zhat: np.ndarray         # (n, d_max) estimated factors
    V: np.ndarray | None = None   # (n, d_max) M' omega_hat_i / p, the
                                  # projected-noise part of the factor
                                  # estimation error per node


def build_cmle_influence(Y: np.ndarray, X: np.ndarray,
                         estimates: list[ComponentEstimate],
                         Zhat: np.ndarray, M: np.ndarray,
                         weights: spatial.SpatialWeights) -> CmleInfluence:
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    WY = weights.matrix @ Y
    phi_cols, a_cols, comp_ids = [], [], []
    for k, est in enumerate(estimates):
        sup = est.support if est.support is not None else np.arange(X.shape[1] if np.size(X) else 0)
        Xk = X[:, sup] if np.size(X) else np.empty((n, 0))
        sk = Xk.shape[1]
        sigma = est.sigma_hat
        resid = Y[:, k] - est.rho_hat * WY[:, k]
        if sk:
            resid = resid - Xk @ est.beta_hat
        eta = Xk @ est.beta_hat if sk else np.zeros(n)
        lu = spla.splu(_s_csc(weights, est.rho_hat))
        g_eta = weights.matrix @ lu.solve(eta) if sk else np.zeros(n)
        g_resid = weights.matrix @ lu.solve(resid)
        gt_resid = lu.solve(weights.matrix.T @ resid, trans="T")
        g_sym = 0.5 * (g_resid + gt_resid)
        tr_g, tr_g2 = _spectrum_traces(weights, est.rho_hat)

        psi = np.empty((n, sk + 2))
        psi[:, 0] = (g_eta * resid + resid * g_sym - sigma * tr_g / n) / sigma
        if sk:
            psi[:, 1:sk + 1] = Xk * (resid / sigma)[:, None]
        psi[:, sk + 1] = (resid ** 2 - sigma) / (2.0 * sigma * sigma)

        info = np.zeros((sk + 2, sk + 2))
        wy = WY[:, k]
        info[0, 0] = (tr_g2 + float(wy @ wy) / sigma) / n
        if sk:
            info[0, 1:sk + 1] = info[1:sk + 1, 0] = Xk.T @ wy / (n * sigma)
            info[1:sk + 1, 1:sk + 1] = Xk.T @ Xk / (n * sigma)
            info[1:sk + 1, sk + 1] = info[sk + 1, 1:sk + 1] = Xk.T @ resid / (n * sigma * sigma)
        info[0, sk + 1] = info[sk + 1, 0] = float(wy @ resid) / (n * sigma * sigma)
        info[sk + 1, sk + 1] = (-0.5 / sigma ** 2 + float(resid @ resid) / (n * sigma ** 3))
        inv_info = np.linalg.inv(info)
        phi_cols.append(psi @ inv_info[:sk + 1, :].T)
        a_cols.append(np.column_stack([wy, Xk]) if sk else wy[:, None])
        comp_ids.extend([k] * (sk + 1))

    Phi = np.hstack(phi_cols)
    A = np.hstack(a_cols)
    col_comp = np.asarray(comp_ids)
    Mexp = M[col_comp]
    d_stack = np.einsum("nk,nk->k", A, Zhat @ Mexp.T) / n
    phi_d = Phi @ d_stack
    return CmleInfluence(Phi=Phi, A=A, col_comp=col_comp, M=M, Mexp=Mexp,
                         phi_d=phi_d, Zhat=Zhat)


def attach_idiosyncratic_noise(infl: CmleInfluence, omega_hat: np.ndarray) -> CmleInfluence:
    """Store the projected second-stage residuals M' omega_hat_i / p.

    The first-stage residuals cannot be used here: projecting them through M
    reproduces Zhat exactly, so their factor-purged part is identically zero.
    The residuals of the augmented fits do not have that degeneracy.
    """
    infl.V = np.asarray(omega_hat, dtype=float) @ infl.M / infl.M.shape[0]
    return infl


def _s_csc(weights: spatial.SpatialWeights, rho: float):
    return (sp.identity(weights.n, format="csc") - rho * weights.matrix.tocsc())


def _factor_error_term(est: AugmentedEstimate, Xj: np.ndarray, wy_j: np.ndarray,
                       omega: np.ndarray, psi_f: np.ndarray,
                       infl: CmleInfluence) -> np.ndarray:
    """SigmaQ: variance contribution of the factor estimation error, plus its
    covariance with the main score."""
    n = len(omega)
    p = infl.M.shape[0]
    s = est.beta_hat.size
    d_max = est.btilde_hat.size
    g = s + d_max + 2
    tau = est.tau_hat

    # cross-partial of the likelihood in the factor coordinates, stacked per
    # influence column: u-part scales with b'M_k, the factor block with Zhat'M_k
    u_mat = np.zeros((n, g))
    u_mat[:, 0] = -wy_j / tau
    if s:
        u_mat[:, 1:1 + s] = -Xj / tau
    u_mat[:, g - 1] = -omega / tau ** 2
    mt = (infl.M @ est.btilde_hat)[infl.col_comp]

    T = infl.Phi @ (mt[:, None] * (infl.A.T @ u_mat / n))
    w = np.zeros(g)
    w[1 + s:1 + s + d_max] = -est.btilde_hat / tau
    T += np.outer(infl.phi_d, w)
    f = infl.A.T @ omega / n
    T[:, 1 + s:1 + s + d_max] += (infl.Phi @ (f[:, None] * infl.Mexp)) / tau
    T *= -1.0 / p

    # projected-noise part of the factor estimation error: M' omega_i / p is
    # correlated with the component's own noise, so it cannot be dropped for
    # moderate p
    if infl.V is not None:
        c = infl.V @ est.btilde_hat
        zv = np.einsum("ij,ij->i", infl.Zhat, infl.V)
        T[:, 0] += -wy_j * c / tau
        if s:
            T[:, 1:1 + s] += -Xj * (c / tau)[:, None]
        T[:, 1 + s:1 + s + d_max] += (-zv[:, None] * est.btilde_hat[None, :]
                                      + omega[:, None] * infl.V) / tau
        T[:, g - 1] += -omega * c / tau ** 2
    return (psi_f.T @ T + T.T @ psi_f + T.T @ T) / n


# ---------------------------------------------------------------------------
# assembled sandwich
# ---------------------------------------------------------------------------

def sandwich_covariance(est: AugmentedEstimate, y: np.ndarray, X: np.ndarray,
                        Zhat: np.ndarray, weights: spatial.SpatialWeights,
                        influence: CmleInfluence | None = None,
                        numeric_check: bool = True) -> AugmentedEstimate:
    """Attach the three-part sandwich covariance and se(rho) to the estimate.

    With `influence=None` the factor-error part is zero (oracle-factor case).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    Zhat = np.asarray(Zhat, dtype=float).reshape(len(y), -1)
    n = len(y)
    D = np.hstack([X, Zhat])
    gamma = np.concatenate([est.beta_hat, est.btilde_hat])
    tau = est.tau_hat
    wy = weights.matrix @ y
    omega = y - est.rho_hat * wy - D @ gamma
    eta = D @ gamma

    G = _dense_g(weights, est.rho_hat)
    Geta = G @ eta
    sigma2 = _information_matrix(G, D, Geta, tau)
    delta = _higher_moment_matrix(G, D, Geta, omega, tau)
    psi_f = _per_node_scores(G, D, Geta, omega, tau)
    if influence is not None:
        sigma_q = _factor_error_term(est, X, wy, omega, psi_f, influence)
    else:
        sigma_q = np.zeros_like(sigma2)

    blocks = SandwichBlocks(Sigma2=sigma2, Delta=delta, SigmaQ=sigma_q)
    s2i = np.linalg.inv(sigma2)
    cov = _psd_floor(s2i @ blocks.Sigma1 @ s2i / n)
    est.blocks = blocks
    est.covariance = cov
    est.se_rho = float(np.sqrt(cov[0, 0]))
    est.diagnostics["sigma2_cond"] = float(np.linalg.cond(sigma2))

    if numeric_check:
        se_num = _numeric_se(est, y, X, Zhat, weights, psi_f, sigma_q)
        est.diagnostics["se_rho_numeric"] = se_num
        ratio = se_num / est.se_rho if est.se_rho > 0 else np.inf
        est.diagnostics["se_disagreement"] = bool(abs(ratio - 1.0) > SE_DISAGREEMENT_TOL)
    return est


def numeric_hessian(est: AugmentedEstimate, y: np.ndarray, X: np.ndarray,
                    Zhat: np.ndarray, weights: spatial.SpatialWeights,
                    step: float = 1e-5) -> np.ndarray:
    """Central finite-difference Hessian of the augmented likelihood at the fit."""
    s = est.beta_hat.size
    d_max = est.btilde_hat.size
    theta0 = np.concatenate([[est.rho_hat], est.beta_hat, est.btilde_hat, [est.tau_hat]])

    def f(theta):
        return loglik_fmle(theta[0], theta[1:1 + s], theta[1 + s:1 + s + d_max],
                           theta[-1], y, X, Zhat, weights)

    g = theta0.size
    hess = np.zeros((g, g))
    h = step * np.maximum(np.abs(theta0), 1.0)
    for a in range(g):
        for b in range(a, g):
            pp = theta0.copy(); pp[a] += h[a]; pp[b] += h[b]
            pm = theta0.copy(); pm[a] += h[a]; pm[b] -= h[b]
            mp = theta0.copy(); mp[a] -= h[a]; mp[b] += h[b]
            mm = theta0.copy(); mm[a] -= h[a]; mm[b] -= h[b]
            hess[a, b] = hess[b, a] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h[a] * h[b])
    return hess


def _numeric_se(est, y, X, Zhat, weights, psi_f, sigma_q) -> float:
    n = len(y)
    j_num = -numeric_hessian(est, y, X, Zhat, weights) / n
    opg = psi_f.T @ psi_f / n
    try:
        ji = np.linalg.inv(j_num)
    except np.linalg.LinAlgError:
        return float("nan")
    cov = _psd_floor(ji @ (opg + sigma_q) @ ji / n)
    return float(np.sqrt(cov[0, 0]))
