"""Row-normalized spatial weight matrices and the operator S(rho) = I - rho*W.

The weight matrix is built from a binary adjacency matrix by dividing each
row by its out-degree; zero-degree rows stay all-zero.  The log-determinant
of S(rho) is evaluated from the (complex) eigenvalues of W, which are
computed once per matrix and reused across the thousands of rho values an
optimizer visits.  Above ``DENSE_EIG_LIMIT`` nodes a sparse LU factorization
per rho is used instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_EIG_LIMIT = 3000
EIG_MODULUS_TOL = 1e-8
IMAG_TOL = 1e-8


class SpatialWeightsError(ValueError):
    """Invalid adjacency or weight matrix input."""


class SolveError(RuntimeError):
    """Linear solve with S(rho) failed or did not converge."""


def _as_sparse(adj) -> sp.csr_matrix:
    if sp.issparse(adj):
        return adj.tocsr().astype(float)
    return sp.csr_matrix(np.asarray(adj, dtype=float))


def validate_adjacency(adj) -> sp.csr_matrix:
    """Check zero diagonal and 0/1 entries; return a canonical CSR matrix."""
    a = _as_sparse(adj)
    if a.shape[0] != a.shape[1]:
        raise SpatialWeightsError(f"adjacency must be square, got {a.shape}")
    if a.diagonal().any():
        raise SpatialWeightsError("adjacency matrix has nonzero diagonal entries")
    data = a.data
    if data.size and not np.all((data == 0.0) | (data == 1.0)):
        raise SpatialWeightsError("adjacency entries must be 0 or 1")
    a.eliminate_zeros()
    return a


class SpatialWeights:
    """Row-normalized sparse weight matrix with a cached eigenvalue spectrum.

    Immutable after construction; safe to share across workers.  Use
    :func:`row_normalize` to build one from an adjacency matrix.
    """

    def __init__(self, matrix: sp.csr_matrix, degrees: np.ndarray):
        self.matrix = matrix.tocsr()
        self.degrees = np.asarray(degrees)
        self.n = matrix.shape[0]
        self._spectrum: np.ndarray | None = None
        self._lu_cache: dict[float, spla.SuperLU] = {}
        # optimizers revisit the same rho values (shared grids, warm-started
        # brackets), so memoizing the log-determinant pays off heavily
        self._logdet_cache: dict[float, float] = {}

    @property
    def spectrum(self) -> np.ndarray | None:
        """Complex eigenvalues of W, or None above the dense-eig size limit."""
        if self._spectrum is None and self.n <= DENSE_EIG_LIMIT:
            ev = np.linalg.eigvals(self.matrix.toarray())
            if np.max(np.abs(ev)) > 1.0 + EIG_MODULUS_TOL:
                raise SpatialWeightsError("eigenvalue modulus exceeds 1 for row-normalized W")
            self._spectrum = ev
        return self._spectrum

    def splu(self, rho: float) -> spla.SuperLU:
        """Sparse LU of S(rho), cached per rho value."""
        key = float(rho)
        lu = self._lu_cache.get(key)
        if lu is None:
            s = sp.identity(self.n, format="csc") - rho * self.matrix.tocsc()
            lu = spla.splu(s)
            if len(self._lu_cache) > 8:
                self._lu_cache.clear()
            self._lu_cache[key] = lu
        return lu

    def inverse_norm_diagnostics(self, rho: float) -> tuple[float, float]:
        """(1-norm, inf-norm) of S(rho)^{-1}; diagnostic only, dense."""
        s_inv = np.linalg.inv(np.eye(self.n) - rho * self.matrix.toarray())
        return (
            float(np.max(np.abs(s_inv).sum(axis=0))),
            float(np.max(np.abs(s_inv).sum(axis=1))),
        )


@dataclass(frozen=True)
class SarTransform:
    """S(rho) = I - rho*W together with its log-determinant."""

    rho: float
    weights: SpatialWeights
    logdet: float

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not np.isfinite(self.logdet):
            raise ValueError("log-determinant is not finite")


def row_normalize(adj) -> SpatialWeights:
    """Build the spatial weight matrix W from a binary adjacency matrix.

    Each row of W is the corresponding adjacency row divided by the node's
    out-degree; zero-degree rows are left all-zero.

    Parameters
    ----------
    adj : sparse or dense binary matrix with zero diagonal.
    """
    a = validate_adjacency(adj)
    degrees = np.asarray(a.sum(axis=1)).ravel()
    inv = np.divide(1.0, degrees, out=np.zeros_like(degrees, dtype=float), where=degrees > 0)
    w = sp.diags(inv) @ a
    return SpatialWeights(w.tocsr(), degrees)


def subnetwork(weights: SpatialWeights, idx: np.ndarray) -> SpatialWeights:
    """Induced subnetwork on the nodes `idx`, re-row-normalized.

    The adjacency pattern is recovered from the nonzero pattern of W.
    """
    idx = np.asarray(idx)
    sub = weights.matrix[idx][:, idx]
    adj = sub.copy()
    adj.data = np.ones_like(adj.data)
    return row_normalize(adj)


def log_det_s(weights: SpatialWeights, rho: float) -> float:
    """log|det(I - rho*W)| evaluated from the cached spectrum.

    Falls back to a sparse LU factorization when the spectrum is unavailable.
    """
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    if rho == 0.0:
        return 0.0
    cached = weights._logdet_cache.get(rho)
    if cached is not None:
        return cached
    ev = weights.spectrum
    if ev is not None:
        terms = 1.0 - rho * ev
        if np.min(np.abs(terms)) < 1e-300:
            raise SolveError(f"S(rho) numerically singular at rho={rho}")
        val = np.sum(np.log(terms))
        if abs(val.imag) > IMAG_TOL * max(1.0, abs(val.real)):
            raise SolveError(f"non-real log-determinant at rho={rho}: imag={val.imag}")
        out = float(val.real)
    else:
        lu = weights.splu(rho)
        diag_u = lu.U.diagonal()
        diag_l = lu.L.diagonal()
        if np.min(np.abs(diag_u)) < 1e-300:
            raise SolveError(f"S(rho) numerically singular at rho={rho}")
        out = float(np.sum(np.log(np.abs(diag_u))) + np.sum(np.log(np.abs(diag_l))))
    if len(weights._logdet_cache) > 100_000:
        weights._logdet_cache.clear()
    weights._logdet_cache[rho] = out
    return out


def sar_transform(weights: SpatialWeights, rho: float) -> SarTransform:
    return SarTransform(rho=float(rho), weights=weights, logdet=log_det_s(weights, rho))


def apply_s(weights: SpatialWeights, rho: float, v: np.ndarray) -> np.ndarray:
    """(I - rho*W) v, computed sparsely; v may be a vector or matrix."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != weights.n:
        raise ValueError(f"dimension mismatch: v has {v.shape[0]} rows, W is {weights.n}x{weights.n}")
    return v - rho * (weights.matrix @ v)


_NEUMANN_MAX_RHO = 0.97
_NEUMANN_MAX_ITER = 2000


def solve_s(weights: SpatialWeights, rho: float, v: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Solve (I - rho*W) u = v.

    For small |rho| the Neumann series u = sum_k (rho*W)^k v converges
    geometrically (||rho*W||_inf <= |rho| < 1) and avoids a factorization;
    otherwise a sparse LU solve is used.
    """
    v = np.asarray(v, dtype=float)
    if not abs(rho) < 1:
        raise SolveError(f"|rho| must be < 1, got {rho}")
    if v.shape[0] != weights.n:
        raise ValueError(f"dimension mismatch: v has {v.shape[0]} rows, W is {weights.n}x{weights.n}")
    if rho == 0.0:
        return v.copy()
    if abs(rho) <= _NEUMANN_MAX_RHO and v.ndim == 1:
        u = v.copy()
        term = v
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            return u
        for _ in range(_NEUMANN_MAX_ITER):
            term = rho * (weights.matrix @ term)
            u += term
            if np.linalg.norm(term) <= tol * vnorm:
                return u
        # fall through to the direct solve if convergence stalls
    u = weights.splu(rho).solve(v)
    if not np.all(np.isfinite(u)):
        raise SolveError(f"singular system at rho={rho}")
    return u
