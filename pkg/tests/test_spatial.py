"""Spatial weight matrices, log-determinants, and S(rho) solves."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from fsar import networks, spatial
from fsar.rng import make_rng


def test_row_normalize_hand_example():
    # edge list {(0,1),(1,0),(1,2)}: node 2 has out-degree 0 -> zero row
    adj = np.array([[0, 1, 0], [1, 0, 1], [0, 0, 0]], dtype=float)
    W = spatial.row_normalize(adj).matrix.toarray()
    expected = np.array([[0, 1, 0], [0.5, 0, 0.5], [0, 0, 0]])
    np.testing.assert_allclose(W, expected)


def test_row_sums_are_zero_or_one(small_weights):
    sums = np.asarray(small_weights.matrix.sum(axis=1)).ravel()
    assert np.all((np.abs(sums - 1.0) < 1e-12) | (sums == 0.0))


def test_validate_adjacency_rejects_diagonal_and_noninteger():
    with pytest.raises(spatial.SpatialWeightsError):
        spatial.validate_adjacency(np.eye(3))
    with pytest.raises(spatial.SpatialWeightsError):
        spatial.validate_adjacency(np.array([[0, 0.5], [0, 0]]))
    with pytest.raises(spatial.SpatialWeightsError):
        spatial.validate_adjacency(np.zeros((2, 3)))


@pytest.mark.parametrize("model", networks.MODELS)
@pytest.mark.parametrize("rho", [-0.9, -0.3, 0.0, 0.5, 0.95])
def test_logdet_matches_dense_determinant(model, rho):
    W = spatial.row_normalize(networks.generate(networks.NetworkSpec(model, 150, seed=2)))
    dense = np.eye(150) - rho * W.matrix.toarray()
    sign, logdet = np.linalg.slogdet(dense)
    assert sign > 0
    assert spatial.log_det_s(W, rho) == pytest.approx(logdet, abs=1e-8)


def test_logdet_lu_fallback_matches_spectrum_path():
    W = spatial.row_normalize(networks.generate(networks.NetworkSpec("DIM", 200, seed=3)))
    via_spectrum = spatial.log_det_s(W, 0.7)
    W2 = spatial.row_normalize(networks.generate(networks.NetworkSpec("DIM", 200, seed=3)))
    W2._spectrum = np.empty(0)  # force the cache miss below
    old_limit = spatial.DENSE_EIG_LIMIT
    W2._spectrum = None
    spatial.DENSE_EIG_LIMIT = 10  # push n over the dense-eig limit
    try:
        via_lu = spatial.log_det_s(W2, 0.7)
    finally:
        spatial.DENSE_EIG_LIMIT = old_limit
    assert via_lu == pytest.approx(via_spectrum, abs=1e-8)


def test_logdet_zero_rho_and_domain():
    W = spatial.row_normalize(networks.generate(networks.NetworkSpec("DIM", 50, seed=1)))
    assert spatial.log_det_s(W, 0.0) == 0.0
    with pytest.raises(ValueError):
        spatial.log_det_s(W, 1.0)


@settings(max_examples=25, deadline=None)
@given(rho=st.floats(-0.96, 0.96), seed=st.integers(0, 50))
def test_solve_s_inverts_apply_s(rho, seed):
    W = spatial.row_normalize(networks.generate(networks.NetworkSpec("DIM", 80, seed=4)))
    v = make_rng(seed).standard_normal(80)
    u = spatial.solve_s(W, rho, v, tol=1e-13)
    np.testing.assert_allclose(spatial.apply_s(W, rho, u), v, atol=1e-9)


def test_solve_s_matrix_rhs(small_weights):
    V = make_rng(9).standard_normal((small_weights.n, 3))
    U = spatial.solve_s(small_weights, 0.6, V)
    np.testing.assert_allclose(spatial.apply_s(small_weights, 0.6, U), V, atol=1e-9)


def test_subnetwork_renormalizes(small_weights):
    idx = np.arange(0, small_weights.n, 2)
    sub = spatial.subnetwork(small_weights, idx)
    sums = np.asarray(sub.matrix.sum(axis=1)).ravel()
    assert sub.n == idx.size
    assert np.all((np.abs(sums - 1.0) < 1e-12) | (sums == 0.0))


def test_logdet_cache_is_exact(small_weights):
    first = spatial.log_det_s(small_weights, 0.31)
    second = spatial.log_det_s(small_weights, 0.31)
    assert first == second
    assert 0.31 in small_weights._logdet_cache


def test_sar_transform_validation(small_weights):
    t = spatial.sar_transform(small_weights, 0.4)
    assert np.isfinite(t.logdet)
    with pytest.raises(ValueError):
        spatial.sar_transform(small_weights, 1.2)
