"""Latent-factor estimation from residuals via diversified projections.

The factors are recovered by projecting each node's p-dimensional residual
vector through a fixed p x d_max matrix M: Zhat_i = M' eps_hat_i / p.  Two
constructions of M are provided: principal-component loadings from a held-out
random partition of the nodes, and signed Walsh-Hadamard columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .rng import make_rng


@dataclass
class DiversifiedProjection:
    M: np.ndarray                  # (p, d_max)
    construction: str              # random_partition | hadamard | user_supplied
    holdout_idx: np.ndarray | None = None
    main_idx: np.ndarray | None = None
    min_eig: float = field(default=np.nan)   # min eigenvalue of M'M/p, diagnostic

    def __post_init__(self):
        gram = self.M.T @ self.M / self.M.shape[0]
        self.min_eig = float(np.linalg.eigvalsh(gram).min())

    @property
    def d_max(self) -> int:
        return self.M.shape[1]

    @property
    def degenerate(self) -> bool:
        return self.min_eig <= 1e-8


@dataclass
class FactorEstimate:
    Zhat: np.ndarray               # (n, d_max)
    eigenvalues: np.ndarray        # descending eigenvalues of cov(residuals)
    ratios: np.ndarray             # eigenvalues[j] / eigenvalues[j+1]


@dataclass
class AlignmentMap:
    """Simulation-only map between estimated and true factor coordinates."""

    H: np.ndarray                  # (d_max, d)

    @property
    def full_rank(self) -> bool:
        return np.linalg.matrix_rank(self.H) == self.H.shape[1]


def projection_alignment(M: np.ndarray, B: np.ndarray) -> AlignmentMap:
    """H = M' B / p, the affine map carrying true factors to Zhat coordinates."""
    return AlignmentMap(H=M.T @ B / M.shape[0])


def least_squares_alignment(Zhat: np.ndarray, Z: np.ndarray) -> AlignmentMap:
    """Regress Zhat on Z to recover the alignment when loadings are unknown."""
    coef, *_ = np.linalg.lstsq(Z, Zhat, rcond=None)
    return AlignmentMap(H=coef.T)


def random_partition(n: int, holdout_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (holdout, main) node index sets."""
    n_hold = int(round(holdout_fraction * n))
    perm = make_rng(seed, 17).permutation(n)
    return np.sort(perm[:n_hold]), np.sort(perm[n_hold:])


def build_projection_random_partition(resid: np.ndarray, d_max: int,
                                      holdout_fraction: float = 0.10,
                                      seed: int = 0) -> DiversifiedProjection:
    """Estimate M from the residual rows of a held-out random node partition.

    A random 10% (by default) of the nodes is held out; M's columns are the
    top-d_max principal-component loadings of the held-out rows of the
    first-stage residual matrix, scaled by sqrt(p) so that M'M/p = I.  Only
    the holdout rows inform M; the resulting projection is applied to the
    whole residual matrix afterwards.
    """
    resid = np.asarray(resid, dtype=float)
    n, p = resid.shape
    hold_idx, main_idx = random_partition(n, holdout_fraction, seed)
    if len(hold_idx) < d_max + 5:
        raise ValueError(f"holdout of {len(hold_idx)} nodes too small for d_max={d_max}")
    cov = np.cov(resid[hold_idx], rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:d_max]
    M = evecs[:, order] * np.sqrt(p)
    return DiversifiedProjection(M=M, construction="random_partition",
                                 holdout_idx=hold_idx, main_idx=main_idx)


def build_projection_hadamard(p: int, d_max: int, seed: int = 0) -> DiversifiedProjection:
    """M from distinct Walsh-Hadamard columns, entries all +-1.

    For p not a power of two the rows of the next larger Hadamard matrix are
    truncated to p and randomly sign-flipped, which keeps M'M/p close to the
    identity in expectation.
    """
    size = 1 << int(np.ceil(np.log2(max(p, 2))))
    if d_max >= size:
        raise ValueError(f"d_max={d_max} exceeds the {size - 1} distinct non-constant columns")
    h = hadamard(size).astype(float)
    M = h[:p, 1:d_max + 1]
    if p != size:
        signs = make_rng(seed, 23).choice([-1.0, 1.0], size=p)
        M = M * signs[:, None]
    return DiversifiedProjection(M=M, construction="hadamard")


def estimate_factors(resid: np.ndarray, proj: DiversifiedProjection) -> FactorEstimate:
    """Zhat = resid @ M / p, plus residual-covariance eigenvalue diagnostics."""
    resid = np.asarray(resid, dtype=float)
    p = resid.shape[1]
    if proj.M.shape[0] != p:
        raise ValueError(f"projection is for p={proj.M.shape[0]}, residuals have p={p}")
    Zhat = resid @ proj.M / p
    cov = np.cov(resid, rowvar=False)
    evals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    evals = np.clip(evals, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = evals[:-1] / evals[1:]
    return FactorEstimate(Zhat=Zhat, eigenvalues=evals, ratios=ratios)


def select_num_factors(eigenvalues: np.ndarray, cap: int = 30) -> int:
    """argmax of the eigenvalue ratio statistic over the leading eigenvalues."""
    ev = np.asarray(eigenvalues, dtype=float)
    if ev.size < 2:
        raise ValueError("need at least two eigenvalues")
    if ev.max() <= 0 or ev[1:].max() <= 0:
        raise ValueError("eigenvalues are all (numerically) zero")
    upper = min(ev.size - 1, cap)
    ratios = ev[:upper] / ev[1:upper + 1]
    ratios = np.where(np.isfinite(ratios), ratios, -np.inf)
    return int(np.argmax(ratios)) + 1
