"""Monte-Carlo replication engine and evaluation metrics.

An experiment fixes one data-generating specification and replicates it R
times.  The model parameters (rho, Beta, B, tau) are drawn once per
specification from the seed base, while the network, covariates, factors,
and noise are redrawn each replicate; estimation error is therefore measured
against a single fixed truth across replicates.

Metrics follow the estimation-error conventions of the simulation protocol:
Err_j^(r) = |rho_hat_j^(r) - rho_j|, MaxErr^(r) = max_j Err_j^(r),
MErr = (Rp)^-1 sum_r sum_j Err_j^(r), RIM = (1 - MErr_f / MErr_c) * 100,
CP_j = coverage of the 95% normal interval rho_hat +- 1.96*SE, and CM = the
percentage of replicates whose selected supports match the truth for every
component simultaneously.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import cmle, dgp, factors, pipeline
from .rng import make_rng

Z975 = 1.959963984540054

STAGE_ORDER = ("scad", "cmle", "factor", "fmle")


def _validate_stages(stages: tuple[str, ...]) -> tuple[str, ...]:
    stages = tuple(stages)
    unknown = set(stages) - set(STAGE_ORDER)
    if unknown:
        raise ValueError(f"unknown stages {sorted(unknown)}")
    if len(set(stages)) != len(stages):
        raise ValueError("duplicate stages")
    core = set(stages) - {"scad"}
    if core != set(("cmle", "factor", "fmle")[:len(core)]):
        raise ValueError("stages must form a prefix of cmle -> factor -> fmle "
                         "(scad optional)")
    if not core:
        raise ValueError("at least the cmle stage is required")
    return tuple(s for s in STAGE_ORDER if s in stages)


@dataclass(frozen=True)
class ExperimentSpec:
    dgp: dgp.DgpConfig
    replications: int
    stages: tuple[str, ...] = ("cmle", "factor", "fmle")
    seed: int = 0
    pipeline: pipeline.PipelineConfig = field(default_factory=pipeline.PipelineConfig)
    fixed_parameters: bool = True
    max_failure_rate: float = 0.02
    workers: int = 1   # aggregation is order-independent, so worker count
                       # cannot change results; execution here is serial

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        object.__setattr__(self, "stages", _validate_stages(self.stages))


@dataclass
class MetricsReport:
    spec: ExperimentSpec
    completed: int
    failures: list[tuple[int, str]]
    max_err_c: np.ndarray                 # (R_ok,)
    merr_c: float
    max_err_f: np.ndarray | None = None
    merr_f: float | None = None
    rim: float | None = None
    cp: np.ndarray | None = None          # (p,) percent
    cp_summary: dict | None = None        # min/median/max + seeded pick
    se_ratio: np.ndarray | None = None    # (p,) mean plug-in SE / MC SD of rho_fmle
    cm: float | None = None               # percent
    support_accuracy: np.ndarray | None = None  # per-replicate fraction of
                                                # components with exact support
    factor_error: np.ndarray | None = None  # per-replicate ||Zhat - Z H'||_F/sqrt(n)
    runtimes: np.ndarray | None = None

    def validate(self) -> None:
        if np.any(self.max_err_c < 0):
            raise AssertionError("negative error")
        if self.merr_f is not None:
            expected = (1.0 - self.merr_f / self.merr_c) * 100.0
            if abs(self.rim - expected) > 1e-9:
                raise AssertionError("RIM identity violated")
        for arr, name in ((self.cp, "CP"),):
            if arr is not None and (np.any(arr < 0) or np.any(arr > 100)):
                raise AssertionError(f"{name} outside [0, 100]")
        if self.cm is not None and not 0 <= self.cm <= 100:
            raise AssertionError("CM outside [0, 100]")

    def to_dict(self) -> dict:
        d = {
            "n": self.spec.dgp.n, "p": self.spec.dgp.p, "q": self.spec.dgp.q,
            "d": self.spec.dgp.d, "network": self.spec.dgp.network.model,
            "replications": self.spec.replications, "completed": self.completed,
            "failures": self.failures, "stages": list(self.spec.stages),
            "seed": self.spec.seed,
            "merr_c": self.merr_c,
            "max_err_c": self.max_err_c.tolist(),
        }
        if self.merr_f is not None:
            d.update(merr_f=self.merr_f, rim=self.rim,
                     max_err_f=self.max_err_f.tolist())
        if self.cp is not None:
            d.update(cp=self.cp.tolist(), cp_summary=self.cp_summary)
        if self.se_ratio is not None:
            d["se_ratio"] = self.se_ratio.tolist()
        if self.cm is not None:
            d["cm"] = self.cm
            d["support_accuracy"] = self.support_accuracy.tolist()
        if self.factor_error is not None:
            d["factor_error"] = self.factor_error.tolist()
        if self.runtimes is not None:
            d["runtime_total"] = float(self.runtimes.sum())
        return d


def run_experiment(spec: ExperimentSpec) -> MetricsReport:
    """Run all replicates serially and aggregate the metric set."""
    R = spec.replications
    p = spec.dgp.p
    param_seed = spec.seed if spec.fixed_parameters else None

    err_c = np.full((R, p), np.nan)
    err_f = np.full((R, p), np.nan)
    covered = np.zeros((R, p), dtype=bool)
    rho_f = np.full((R, p), np.nan)
    se_f = np.full((R, p), np.nan)
    exact = np.zeros(R, dtype=bool)
    match_frac = np.full(R, np.nan)
    fac_err = np.full(R, np.nan)
    runtimes = np.full(R, np.nan)
    failures: list[tuple[int, str]] = []
    ok = np.zeros(R, dtype=bool)

    want_factor = "factor" in spec.stages
    want_fmle = "fmle" in spec.stages
    want_scad = "scad" in spec.stages

    for r in range(R):
        t0 = time.perf_counter()
        seed_r = spec.seed + r
        cfg = replace(spec.dgp, seed=seed_r, param_seed=param_seed)
        try:
            Y, truth, W = dgp.simulate(cfg)
            pcfg = replace(spec.pipeline, partition_seed=seed_r)
            if not want_factor:
                ests = cmle.fit_all(Y, truth.X, truth.supports, W)
                err_c[r] = np.abs(np.array([e.rho_hat for e in ests]) - truth.rho)
            else:
                supports = None if want_scad else truth.supports
                if want_scad:
                    sel = pipeline.select_supports(Y, truth.X, W, pcfg)
                    supports = sel.supports
                    matches = [np.array_equal(s, t) for s, t in
                               zip(supports, truth.supports)]
                    exact[r] = all(matches)
                    match_frac[r] = float(np.mean(matches))
                if want_fmle:
                    res = pipeline.run_pipeline(Y, truth.X, W, supports=supports,
                                                config=pcfg)
                    err_c[r] = np.abs(res.rho_cmle - truth.rho)
                    err_f[r] = np.abs(res.rho_fmle - truth.rho)
                    covered[r] = np.abs(res.rho_fmle - truth.rho) <= Z975 * res.se_rho
                    rho_f[r] = res.rho_fmle
                    se_f[r] = res.se_rho
                    H = factors.projection_alignment(res.projection.M, truth.B).H
                    diff = res.factor_estimate.Zhat - truth.Z @ H.T
                    fac_err[r] = np.linalg.norm(diff) / np.sqrt(cfg.n)
                else:
                    ests, resid, proj, fac = pipeline._factor_stage(
                        Y, truth.X, supports, W, pcfg)
                    err_c[r] = np.abs(np.array([e.rho_hat for e in ests]) - truth.rho)
                    H = factors.projection_alignment(proj.M, truth.B).H
                    fac_err[r] = np.linalg.norm(fac.Zhat - truth.Z @ H.T) / np.sqrt(cfg.n)
            ok[r] = True
        except Exception as exc:  # noqa: BLE001 - replicate isolation
            failures.append((r, repr(exc)))
        runtimes[r] = time.perf_counter() - t0

    completed = int(ok.sum())
    if completed == 0 or len(failures) > spec.max_failure_rate * R:
        raise RuntimeError(f"{len(failures)}/{R} replicates failed: {failures[:5]}")

    report = MetricsReport(
        spec=spec, completed=completed, failures=failures,
        max_err_c=np.nanmax(err_c[ok], axis=1),
        merr_c=float(np.nanmean(err_c[ok])),
        runtimes=runtimes,
    )
    if want_fmle:
        report.max_err_f = np.nanmax(err_f[ok], axis=1)
        report.merr_f = float(np.nanmean(err_f[ok]))
        report.rim = (1.0 - report.merr_f / report.merr_c) * 100.0
        cp = covered[ok].mean(axis=0) * 100.0
        pick = int(make_rng(spec.seed, 99).integers(p))
        report.cp = cp
        report.cp_summary = {"min": float(cp.min()), "median": float(np.median(cp)),
                             "max": float(cp.max()), "picked_j": pick,
                             "picked_cp": float(cp[pick])}
        if completed >= 3:
            mc_sd = rho_f[ok].std(axis=0, ddof=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                report.se_ratio = se_f[ok].mean(axis=0) / mc_sd
    if want_scad:
        report.cm = float(exact[ok].mean() * 100.0)
        report.support_accuracy = match_frac[ok]
    if want_factor:
        report.factor_error = fac_err[ok]
    report.validate()
    return report


def summarize_boxplot_data(reports: list[MetricsReport], metric: str = "max_err_c"):
    """Tidy quantile table of log(MaxErr) per (network, n, p) cell."""
    import pandas as pd
    rows = []
    qs = (0.05, 0.25, 0.50, 0.75, 0.95)
    for rep in reports:
        vals = getattr(rep, metric)
        if vals is None:
            continue
        logv = np.log(np.maximum(vals, 1e-300))
        row = {"network": rep.spec.dgp.network.model, "n": rep.spec.dgp.n,
               "p": rep.spec.dgp.p, "metric": metric}
        row.update({f"q{int(q * 100):02d}": float(np.quantile(logv, q)) for q in qs})
        rows.append(row)
    if not rows:
        raise ValueError("no reports carry the requested metric")
    return pd.DataFrame(rows)


def save_report(report: MetricsReport, path: str | Path) -> None:
    """Write the aggregate report as JSON plus per-replicate CSV."""
    import pandas as pd
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    cols = {"max_err_c": report.max_err_c}
    if report.max_err_f is not None:
        cols["max_err_f"] = report.max_err_f
    if report.factor_error is not None:
        cols["factor_error"] = report.factor_error
    pd.DataFrame(cols).to_csv(out / "replicates.csv", index=False)
