"""Monte-Carlo harness: stage validation, determinism, and metric identities."""

import numpy as np
import pytest

from fsar import dgp, harness, networks


def _spec(**kw):
    base = dict(
        dgp=dgp.DgpConfig(n=200, p=8, q=5, d=2,
                          network=networks.NetworkSpec("DIM", 200)),
        replications=3, seed=11)
    base.update(kw)
    return harness.ExperimentSpec(**base)


def test_stage_validation():
    assert harness._validate_stages(("cmle",)) == ("cmle",)
    assert harness._validate_stages(("fmle", "cmle", "factor")) == (
        "cmle", "factor", "fmle")
    assert harness._validate_stages(("scad", "cmle")) == ("scad", "cmle")
    for bad in [("fmle",), ("cmle", "fmle"), ("scad",), (), ("cmle", "cmle"),
                ("pca",)]:
        with pytest.raises(ValueError):
            harness._validate_stages(bad)


def test_run_experiment_metrics_and_identities():
    rep = harness.run_experiment(_spec())
    assert rep.completed == 3
    assert rep.max_err_c.shape == (3,)
    assert rep.rim == pytest.approx((1 - rep.merr_f / rep.merr_c) * 100)
    assert rep.cp.shape == (8,)
    assert rep.cm is None  # no scad stage requested
    rep.validate()


def test_run_experiment_deterministic():
    r1 = harness.run_experiment(_spec())
    r2 = harness.run_experiment(_spec())
    np.testing.assert_array_equal(r1.max_err_f, r2.max_err_f)
    assert r1.cp_summary == r2.cp_summary


def test_fixed_parameters_share_truth():
    # with fixed_parameters the per-replicate errors target one common rho
    spec = _spec(fixed_parameters=True)
    cfgs = [type(spec.dgp)(**{**spec.dgp.__dict__, "seed": spec.seed + r,
                              "param_seed": spec.seed}) for r in range(2)]
    t0 = dgp.simulate(cfgs[0])[1]
    t1 = dgp.simulate(cfgs[1])[1]
    np.testing.assert_array_equal(t0.rho, t1.rho)


def test_cmle_only_stage():
    rep = harness.run_experiment(_spec(stages=("cmle",)))
    assert rep.merr_f is None and rep.cp is None and rep.factor_error is None
    assert rep.merr_c > 0


def test_scad_stage_reports_cm():
    spec = _spec(dgp=dgp.DgpConfig(n=300, p=8, q=5, d=2,
                                   network=networks.NetworkSpec("DIM", 300)),
                 replications=2, stages=("scad", "cmle", "factor", "fmle"))
    rep = harness.run_experiment(spec)
    assert rep.cm is not None and 0 <= rep.cm <= 100


def test_failure_rate_enforced(monkeypatch):
    spec = _spec()
    calls = {"k": 0}
    real = dgp.simulate

    def flaky(cfg):
        calls["k"] += 1
        if calls["k"] == 2:
            raise RuntimeError("synthetic failure")
        return real(cfg)

    monkeypatch.setattr(harness.dgp, "simulate", flaky)
    with pytest.raises(RuntimeError, match="replicates failed"):
        harness.run_experiment(spec)  # 1/3 > 2% failure budget


def test_boxplot_summary_tidy():
    reps = [harness.run_experiment(_spec()),
            harness.run_experiment(_spec(seed=21))]
    df = harness.summarize_boxplot_data(reps, metric="max_err_c")
    assert list(df.columns) == ["network", "n", "p", "metric",
                                "q05", "q25", "q50", "q75", "q95"]
    assert len(df) == 2
    assert (df["q25"] <= df["q50"]).all() and (df["q50"] <= df["q75"]).all()


def test_save_report(tmp_path):
    rep = harness.run_experiment(_spec())
    harness.save_report(rep, tmp_path)
    assert (tmp_path / "report.json").exists()
    import json
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["merr_c"] == pytest.approx(rep.merr_c)
    import pandas as pd
    df = pd.read_csv(tmp_path / "replicates.csv")
    assert {"max_err_c", "max_err_f", "factor_error"} <= set(df.columns)
