"""Synthetic data generation: seeding structure, sparsity rule, model identity."""

import numpy as np
import pytest

from fsar import dgp, networks, spatial


def _cfg(**kw):
    base = dict(n=200, p=8, q=10, d=2,
                network=networks.NetworkSpec("DIM", 200), seed=3)
    base.update(kw)
    return dgp.DgpConfig(**base)


def test_default_sparsity_rule():
    assert dgp.default_sparsity(5) == 2
    assert dgp.default_sparsity(10) == 5
    assert dgp.default_sparsity(20) == 10


def test_simulate_shapes_and_support():
    cfg = _cfg()
    Y, truth, W = dgp.simulate(cfg)
    assert Y.shape == (200, 8)
    assert truth.X.shape == (200, 10)
    assert truth.Z.shape == (200, 2)
    assert truth.Beta.shape == (8, 10)
    s = cfg.s
    assert all(np.array_equal(sup, np.arange(s)) for sup in truth.supports)
    assert np.all(truth.Beta[:, s:] == 0)
    assert np.all(truth.Beta[:, :s] >= 0.5) and np.all(truth.Beta[:, :s] <= 1.0)
    assert np.all((truth.rho >= 0.2) & (truth.rho <= 0.9))
    assert np.all((truth.tau >= 0.1) & (truth.tau <= 0.2))


def test_simulate_is_deterministic():
    Y1, t1, _ = dgp.simulate(_cfg())
    Y2, t2, _ = dgp.simulate(_cfg())
    np.testing.assert_array_equal(Y1, Y2)
    np.testing.assert_array_equal(t1.rho, t2.rho)


def test_param_seed_fixes_truth_across_replicates():
    Y1, t1, _ = dgp.simulate(_cfg(seed=10, param_seed=0))
    Y2, t2, _ = dgp.simulate(_cfg(seed=11, param_seed=0))
    np.testing.assert_array_equal(t1.rho, t2.rho)
    np.testing.assert_array_equal(t1.Beta, t2.Beta)
    np.testing.assert_array_equal(t1.B, t2.B)
    assert not np.allclose(Y1, Y2)  # noise and network still vary


def test_sar_identity_holds():
    # S(rho_j) Y_j must equal X beta_j + Z b_j + omega_j exactly
    Y, truth, W = dgp.simulate(_cfg())
    rhs = truth.X @ truth.Beta.T + truth.Z @ truth.B.T + truth.Omega
    for j in range(Y.shape[1]):
        lhs = spatial.apply_s(W, truth.rho[j], Y[:, j])
        np.testing.assert_allclose(lhs, rhs[:, j], atol=1e-8)


def test_null_design_sparsity_zero():
    Y, truth, _ = dgp.simulate(_cfg(sparsity=0))
    assert np.all(truth.Beta == 0)
    assert all(sup.size == 0 for sup in truth.supports)
    assert np.any(truth.B != 0)  # factors remain active in the null design


def test_heavy_tails_unit_variance():
    cfg = _cfg(n=5000, heavy_tails=True)
    _, truth, _ = dgp.simulate(cfg)
    std = truth.Omega.std(axis=0)
    np.testing.assert_allclose(std, np.sqrt(truth.tau), rtol=0.15)


def test_config_validation():
    with pytest.raises(ValueError):
        _cfg(d=0)
    with pytest.raises(ValueError):
        _cfg(p=2, d=2)
    with pytest.raises(ValueError):
        _cfg(sparsity=11)
    with pytest.raises(ValueError):
        _cfg(rho_range=(0.2, 1.0))


def test_save_dataset_round_trip(tmp_path):
    cfg = _cfg()
    Y, truth, W = dgp.simulate(cfg)
    dgp.save_dataset(tmp_path, Y, truth, W, cfg)
    import pandas as pd
    Y2 = pd.read_csv(tmp_path / "Y.csv", float_precision="round_trip").to_numpy()
    np.testing.assert_allclose(Y2, Y, rtol=0, atol=0)  # %.17g is lossless
    edges = pd.read_csv(tmp_path / "edges.csv").to_numpy()
    adj = np.zeros((cfg.n, cfg.n))
    adj[edges[:, 0], edges[:, 1]] = 1.0
    W2 = spatial.row_normalize(adj)
    np.testing.assert_allclose(W2.matrix.toarray(), W.matrix.toarray())
