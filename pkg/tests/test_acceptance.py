"""Acceptance gate: one test per acceptance criterion, one printed verdict each.

Monte-Carlo cells are defined in acceptance_cells.py and cached on disk by
conftest.cached_experiment; run scripts/run_acceptance_cells.py beforehand to
populate the cache (hours of single-core compute), after which this file runs
in minutes.
"""

import numpy as np
import pytest

import acceptance_cells as cells
from conftest import cached_experiment
from fsar import cmle, dgp, fmle, networks, pipeline, scad, spatial
from fsar.rng import make_rng


def _verdict(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


# -- 1. estimation-accuracy cell, DIM n=500 p=50 ------------------------------

def test_criterion_1_table_cell_dim():
    rep = cached_experiment(cells.table_cell_dim())
    merr_f, rim = rep["merr_f"], rep["rim"]
    cp_mean = float(np.mean(rep["cp"]))
    ok = (abs(merr_f - 0.018) <= 0.006 and abs(rim - 41.58) <= 12.0
          and 92.0 <= cp_mean <= 98.0)
    _verdict("criterion 1 (DIM n=500 p=50 accuracy)", ok,
             f"MErr_f={merr_f:.4f} (target 0.018±0.006), "
             f"RIM={rim:.2f} (target 41.58±12), CP={cp_mean:.2f} (in [92, 98])")
    assert abs(merr_f - 0.018) <= 0.006
    assert abs(rim - 41.58) <= 12.0
    assert 92.0 <= cp_mean <= 98.0


# -- 2. estimation-accuracy cell, SBM n=1000 p=100 ----------------------------

def test_criterion_2_table_cell_sbm():
    rep = cached_experiment(cells.table_cell_sbm())
    merr_f, rim = rep["merr_f"], rep["rim"]
    ok = abs(merr_f - 0.014) <= 0.005 and abs(rim - 42.85) <= 12.0
    _verdict("criterion 2 (SBM n=1000 p=100 accuracy)", ok,
             f"MErr_f={merr_f:.4f} (target 0.014±0.005), "
             f"RIM={rim:.2f} (target 42.85±12)")
    assert abs(merr_f - 0.014) <= 0.005
    assert abs(rim - 42.85) <= 12.0


# -- 3. first-stage error decreases with n ------------------------------------

def test_criterion_3_consistency_trend():
    lines, ok = [], True
    for net in cells.NETWORKS:
        medians = []
        for n in cells.SIZES:
            rep = cached_experiment(cells.consistency_cell(net, n))
            medians.append(float(np.median(np.log(rep["max_err_c"]))))
        mono = all(a > b for a, b in zip(medians, medians[1:]))
        ok &= mono
        lines.append(f"{net}: " + " > ".join(f"{m:.3f}" for m in medians)
                     + ("" if mono else " NOT MONOTONE"))
    _verdict("criterion 3 (median log MaxErr_c decreasing in n, p=100)", ok,
             "; ".join(lines))
    assert ok


# -- 4. support selection improves with n -------------------------------------

def test_criterion_4_selection_trend():
    lines, ok = [], True
    for net in cells.NETWORKS:
        cms = [cached_experiment(cells.selection_cell(net, n))["cm"]
               for n in cells.SIZES]
        mono = all(a <= b for a, b in zip(cms, cms[1:]))
        ok &= mono and cms[-1] >= 90.0
        lines.append(f"{net}: CM=" + "/".join(f"{c:.0f}" for c in cms))
    _verdict("criterion 4 (CM nondecreasing, >=90% at n=1500)", ok,
             "; ".join(lines))
    assert ok


# -- 5. factor recovery improves along (n, p) ---------------------------------

def test_criterion_5_factor_recovery_trend():
    meds = []
    for n, p in ((500, 50), (1000, 100), (1500, 200)):
        rep = cached_experiment(cells.factor_recovery_cell(n, p))
        meds.append(float(np.median(rep["factor_error"])))
    ok = meds[0] > meds[1] > meds[2]
    _verdict("criterion 5 (median factor error decreasing)", ok,
             " > ".join(f"{m:.4f}" for m in meds))
    assert ok


# -- 6. deterministic oracle-equivalence suite --------------------------------

def test_criterion_6_oracle_suite():
    checks = []

    # (a) log-determinant vs dense evaluation, n = 500, all network models
    lax = 0.0
    for model in cells.NETWORKS:
        W = spatial.row_normalize(
            networks.generate(networks.NetworkSpec(model, 500, seed=1)))
        for rho in (-0.9, -0.4, 0.3, 0.8, 0.95):
            dense = np.linalg.slogdet(np.eye(500) - rho * W.matrix.toarray())[1]
            lax = max(lax, abs(spatial.log_det_s(W, rho) - dense))
    checks.append(("logdet vs dense", lax < 1e-8, f"max abs diff {lax:.2e}"))

    # (b) concentrated-likelihood argmax vs 201-point grid, 50 instances
    worst = 0.0
    for seed in range(50):
        W = spatial.row_normalize(
            networks.generate(networks.NetworkSpec("DIM", 100, seed=seed)))
        rng = make_rng(seed, 41)
        X = rng.standard_normal((100, 3))
        rho = rng.uniform(-0.8, 0.8)
        y = spatial.solve_s(W, rho, X @ rng.uniform(0.5, 1.0, 3)
                            + 0.5 * rng.standard_normal(100), tol=1e-13)
        prof = cmle.ConcentratedSar(y, X, W)
        grid = np.linspace(-0.99, 0.99, 201)
        gbest = grid[int(np.argmax([prof.concentrated(r) for r in grid]))]
        est = cmle.fit_component(y, X, W)
        worst = max(worst, abs(est.rho_hat - gbest))
    resolution = 1.98 / 200
    checks.append(("argmax vs 201-grid", worst <= resolution,
                   f"max deviation {worst:.4f} <= grid step {resolution:.4f}"))

    # (c) profiled (beta, sigma) stationarity by finite differences
    W = spatial.row_normalize(
        networks.generate(networks.NetworkSpec("DIM", 200, seed=3)))
    rng = make_rng(3, 42)
    X = rng.standard_normal((200, 4))
    y = spatial.solve_s(W, 0.5, X @ rng.uniform(0.5, 1.0, 4)
                        + 0.4 * rng.standard_normal(200), tol=1e-13)
    est = cmle.fit_component(y, X, W)
    eps, gmax = 1e-6, 0.0
    for k in range(4):
        up = est.beta_hat.copy(); up[k] += eps
        dn = est.beta_hat.copy(); dn[k] -= eps
        gmax = max(gmax, abs(
            cmle.loglik(est.rho_hat, up, est.sigma_hat, y, X, W)
            - cmle.loglik(est.rho_hat, dn, est.sigma_hat, y, X, W)) / (2 * eps))
    gmax = max(gmax, abs(
        cmle.loglik(est.rho_hat, est.beta_hat, est.sigma_hat + eps, y, X, W)
        - cmle.loglik(est.rho_hat, est.beta_hat, est.sigma_hat - eps, y, X, W))
        / (2 * eps))
    rel = gmax / abs(est.loglik)
    checks.append(("profile stationarity", rel < 1e-4, f"max rel grad {rel:.2e}"))

    # (d) analytic information matrix vs numeric Hessian at n=1500
    cfg = dgp.DgpConfig(n=1500, p=15, q=8, d=2,
                        network=networks.NetworkSpec("DIM", 1500, seed=2), seed=2)
    Y, truth, W = dgp.simulate(cfg)
    res = pipeline.run_pipeline(Y, truth.X, W, supports=truth.supports,
                                config=pipeline.PipelineConfig(d_max=4))
    e = res.fmle_estimates[5]
    Xj = truth.X[:, truth.supports[5]]
    Zh = res.factor_estimate.Zhat
    h_num = -fmle.numeric_hessian(e, Y[:, 5], Xj, Zh, W) / cfg.n
    s2 = e.blocks.Sigma2
    overall = np.linalg.norm(h_num - s2) / np.linalg.norm(s2)
    rho_rel = abs(h_num[0, 0] - s2[0, 0]) / abs(s2[0, 0])
    hess_ok = overall < 0.02 and rho_rel < 0.02
    checks.append(("Sigma2 vs numeric Hessian",
                   hess_ok, f"matrix rel {overall:.4f}, rho entry rel {rho_rel:.4f}"))

    # (e) BIC and SCAD-derivative formulas vs independent evaluation
    err = 0.0
    rng = make_rng(8, 43)
    for _ in range(500):
        t = float(rng.uniform(0, 5)); lam = float(rng.uniform(1e-4, 2))
        a = float(rng.uniform(2.5, 6))
        ref = lam * (t <= lam) + max(a * lam - t, 0.0) / (a - 1.0) * (t > lam)
        err = max(err, abs(scad.scad_derivative(t, lam, a) - ref))
    rec = scad.ScadRecord(lam=0.1, rho_hat=0.0, beta_hat=np.zeros(20),
                          extra_hat=np.empty(0), sigma_hat=1.0, loglik=-321.5,
                          objective=0.0, support=np.arange(4))
    for (n, p, q, alpha) in ((1500, 50, 20, 2.0), (500, 100, 10, 1.0)):
        ref = 321.5 / n + 4 * np.log(n) * np.exp((2.0 / alpha)
                                                 * np.log(np.log(p * q))) / n
        err = max(err, abs(scad.bic(rec, n, p, q, alpha) - ref))
    checks.append(("BIC/SCAD formulas", err < 1e-12, f"max abs err {err:.2e}"))

    ok = all(c[1] for c in checks)
    _verdict("criterion 6 (oracle suite)", ok,
             "; ".join(f"{name} {'ok' if good else 'FAIL'} ({d})"
                       for name, good, d in checks))
    assert ok


# -- 7. standard-error calibration --------------------------------------------

def test_criterion_7_se_calibration():
    spec = cells.calibration_cell()
    rep = cached_experiment(spec)
    # reconstruct per-component ratios from the per-replicate records kept in
    # the cache: mean plug-in SE over replicates vs the MC SD of rho_fmle
    ratios = np.asarray(rep["se_ratio"])
    med = float(np.median(ratios))
    ok = 0.85 <= med <= 1.15
    _verdict("criterion 7 (SE within 15% of MC SD, R=500)", ok,
             f"median SE/SD ratio {med:.3f}, range "
             f"[{ratios.min():.3f}, {ratios.max():.3f}]")
    assert ok


# -- 8. null design selects nothing -------------------------------------------

def test_criterion_8_null_selection():
    rep = cached_experiment(cells.null_selection_cell())
    frac = float(np.mean(rep["support_accuracy"]))
    ok = frac >= 0.95
    _verdict("criterion 8 (null design, empty supports)", ok,
             f"empty-support rate {100 * frac:.1f}% (needs >=95%)")
    assert ok
