"""Random network generators: dyad-independence, stochastic block, latent space.

All three return sparse binary adjacency matrices with zero diagonal and are
deterministic given (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .rng import make_rng

MODELS = ("DIM", "SBM", "LSM")


@dataclass(frozen=True)
class NetworkSpec:
    """Which generator to use and at what size."""

    model: str
    n: int
    sbm_blocks: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.sbm_blocks < 1:
            raise ValueError("sbm_blocks must be >= 1")


def generate_dim(n: int, seed: int | np.random.Generator = 0) -> sp.csr_matrix:
    """Dyad independence model.

    Each unordered dyad (i1 < i2) is drawn independently with
    P{(1,1)} = 2/n and P{(1,0)} = P{(0,1)} = 0.5 * n^{-0.8}, so the expected
    number of mutual dyads is O(n) and node degrees diverge slowly.
    """
    if n < 3:
        raise ValueError("DIM requires n >= 3 so dyad probabilities are valid")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    p11 = 2.0 / n
    p10 = 0.5 * n ** -0.8
    iu, ju = np.triu_indices(n, k=1)
    u = rng.random(iu.size)
    mutual = u < p11
    fwd = (u >= p11) & (u < p11 + p10)
    bwd = (u >= p11 + p10) & (u < p11 + 2 * p10)
    rows = np.concatenate([iu[mutual], ju[mutual], iu[fwd], ju[bwd]])
    cols = np.concatenate([ju[mutual], iu[mutual], ju[fwd], iu[bwd]])
    a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    return a


def generate_sbm(n: int, blocks: int = 5, seed: int | np.random.Generator = 0) -> sp.csr_matrix:
    """Stochastic block model with uniform labels over `blocks` blocks.

    Directed entries are independent with edge probability 9/n within a
    block and 3/n across blocks.
    """
    if n < max(9, blocks):
        raise ValueError("SBM requires n >= 9 and n >= blocks")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    labels = rng.integers(0, blocks, size=n)
    p_in, p_out = 9.0 / n, 3.0 / n
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    a = (rng.random((n, n)) < prob).astype(float)
    np.fill_diagonal(a, 0.0)
    return sp.csr_matrix(a)


def generate_lsm(n: int, seed: int | np.random.Generator = 0) -> sp.csr_matrix:
    """Latent space model with scalar U(0,1) positions.

    P(edge i1 -> i2) is a logistic function of -0.25 * n * |d_i1 - d_i2|,
    so only nodes with nearby latent positions connect.
    """
    if n < 2:
        raise ValueError("LSM requires n >= 2")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    pos = rng.random(n)
    dist = np.abs(pos[:, None] - pos[None, :])
    x = -0.25 * n * dist
    prob = 1.0 / (1.0 + np.exp(-x))
    a = (rng.random((n, n)) < prob).astype(float)
    np.fill_diagonal(a, 0.0)
    return sp.csr_matrix(a)


def generate(spec: NetworkSpec, rng: np.random.Generator | None = None) -> sp.csr_matrix:
    """Generate an adjacency matrix from a NetworkSpec."""
    source = rng if rng is not None else make_rng(spec.seed)
    if spec.model == "DIM":
        return generate_dim(spec.n, source)
    if spec.model == "SBM":
        return generate_sbm(spec.n, spec.sbm_blocks, source)
    return generate_lsm(spec.n, source)
