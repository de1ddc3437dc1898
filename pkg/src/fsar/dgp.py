"""Synthetic data generation for the factor-augmented SAR model.

For each response component j the observed column is
Y_j = S(rho_j)^{-1} (X beta_j + Z b_j + Omega_j) with independent noise
omega_ij ~ N(0, tau_jj).  Parameter draws follow the simulation design:
rho_j ~ U(0.2, 0.9), active betas ~ U(0.5, 1), loadings ~ N(0, 1),
tau_jj ~ U(0.1, 0.2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import networks, spatial
from .rng import make_rng

_SPARSITY_RULE = {5: 2, 10: 5, 20: 10}


def default_sparsity(q: int) -> int:
    """True model size per response: 2/5/10 for q = 5/10/20, else q//2 capped."""
    if q in _SPARSITY_RULE:
        return _SPARSITY_RULE[q]
    return max(1, min(q, q // 2))


@dataclass(frozen=True)
class DgpConfig:
    n: int
    p: int
    q: int
    d: int
    network: networks.NetworkSpec
    seed: int = 0
    # parameters (rho, Beta, B, tau) are drawn from param_seed when given, so
    # replicates can redraw network/noise while the truth stays fixed
    param_seed: int | None = None
    tau_range: tuple[float, float] = (0.1, 0.2)
    beta_range: tuple[float, float] = (0.5, 1.0)
    rho_range: tuple[float, float] = (0.2, 0.9)
    sparsity: int | None = None
    heavy_tails: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.p <= self.d:
            raise ValueError("p must exceed d")
        s = self.s
        if not 0 <= s <= self.q:
            raise ValueError(f"sparsity {s} outside [0, q]")
        if not -1 < self.rho_range[0] <= self.rho_range[1] < 1:
            raise ValueError("rho_range must lie inside (-1, 1)")

    @property
    def s(self) -> int:
        return self.sparsity if self.sparsity is not None else default_sparsity(self.q)


@dataclass
class GroundTruth:
    """True parameters and latent quantities behind one simulated dataset."""

    rho: np.ndarray          # (p,)
    Beta: np.ndarray         # (p, q) sparse rows
    B: np.ndarray            # (p, d) factor loadings
    tau: np.ndarray          # (p,)
    supports: list[np.ndarray]
    Z: np.ndarray            # (n, d)
    X: np.ndarray            # (n, q)
    Omega: np.ndarray        # (n, p)


def _noise(rng: np.random.Generator, n: int, p: int, heavy_tails: bool) -> np.ndarray:
    if not heavy_tails:
        return rng.standard_normal((n, p))
    # symmetric Weibull(1)-scaled draws: unit-variance but sub-Weibull(1) tails
    w = rng.weibull(1.0, size=(n, p))
    signs = rng.choice([-1.0, 1.0], size=(n, p))
    return signs * w / np.sqrt(2.0)


def simulate(config: DgpConfig) -> tuple[np.ndarray, GroundTruth, spatial.SpatialWeights]:
    """Draw (Y, truth, W) for one replicate; pure function of the config."""
    net_rng = make_rng(config.seed, 0)
    pseed = config.seed if config.param_seed is None else config.param_seed
    param_rng = make_rng(pseed, 1)
    noise_rng = make_rng(config.seed, 2)

    adj = networks.generate(replace(config.network, n=config.n), net_rng)
    weights = spatial.row_normalize(adj)

    n, p, q, d, s = config.n, config.p, config.q, config.d, config.s
    rho = param_rng.uniform(*config.rho_range, size=p)
    Beta = np.zeros((p, q))
    Beta[:, :s] = param_rng.uniform(*config.beta_range, size=(p, s))
    B = param_rng.standard_normal((p, d))
    tau = param_rng.uniform(*config.tau_range, size=p)
    supports = [np.arange(s) for _ in range(p)]

    X = noise_rng.standard_normal((n, q))
    Z = noise_rng.standard_normal((n, d))
    Omega = _noise(noise_rng, n, p, config.heavy_tails) * np.sqrt(tau)[None, :]

    rhs = X @ Beta.T + Z @ B.T + Omega
    Y = np.empty((n, p))
    for j in range(p):
        Y[:, j] = spatial.solve_s(weights, rho[j], rhs[:, j], tol=1e-12)

    truth = GroundTruth(rho=rho, Beta=Beta, B=B, tau=tau, supports=supports,
                        Z=Z, X=X, Omega=Omega)
    return Y, truth, weights


def save_dataset(path: str | Path, Y: np.ndarray, truth: GroundTruth,
                 weights: spatial.SpatialWeights, config: DgpConfig) -> None:
    """Persist a simulated dataset as CSVs plus a JSON manifest."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    p, q = Y.shape[1], truth.X.shape[1]
    _write_csv(out / "Y.csv", Y, [f"y{j}" for j in range(p)])
    _write_csv(out / "X.csv", truth.X, [f"x{k}" for k in range(q)])
    coo = weights.matrix.tocoo()
    edges = np.column_stack([coo.row[coo.data > 0], coo.col[coo.data > 0]])
    _write_csv(out / "edges.csv", edges, ["src", "dst"], fmt="%d")
    _write_csv(out / "truth_rho.csv", truth.rho[:, None], ["rho"])
    _write_csv(out / "truth_beta.csv", truth.Beta, [f"x{k}" for k in range(q)])
    manifest = {
        "n": config.n, "p": config.p, "q": config.q, "d": config.d,
        "seed": config.seed, "network": config.network.model,
        "sparsity": config.s, "heavy_tails": config.heavy_tails,
        "files": {"Y": "Y.csv", "X": "X.csv", "W_edges": "edges.csv"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def _write_csv(path: Path, arr: np.ndarray, header: list[str], fmt: str = "%.17g") -> None:
    np.savetxt(path, arr, delimiter=",", header=",".join(header), comments="", fmt=fmt)
