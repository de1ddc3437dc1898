"""Command-line interface: simulate, fit, experiment, and diagnose.

Data interchange is CSV with headers; every run writes a ``manifest.json``
capturing the full configuration and seed so equal configs produce identical
outputs.  Exit codes: 0 success, 1 usage error, 2 data error, 3 estimation
failure.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import __version__, cmle, dgp, factors, harness, networks, pipeline, spatial

RATIO_CONFIDENCE_THRESHOLD = 1.5  # below this max eigenvalue ratio the
                                  # factor-count estimate is flagged low-confidence


class DataError(click.ClickException):
    exit_code = 2


class EstimationError(click.ClickException):
    exit_code = 3


@dataclass
class Dataset:
    Y: np.ndarray
    X: np.ndarray | None
    W: spatial.SpatialWeights
    y_names: list[str]
    x_names: list[str] = field(default_factory=list)
    log: list[str] = field(default_factory=list)


def _read_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except Exception as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if frame.shape[1] == 0:
        raise DataError(f"{path} has no columns")
    # C-contiguous copy: BLAS results differ in the last bit on strided
    # columns, which breaks bitwise reproducibility of persisted datasets
    values = np.ascontiguousarray(frame.to_numpy(dtype=float))
    return list(frame.columns), values


def _reject_missing(names: list[str], values: np.ndarray, path: str | Path) -> None:
    miss = np.isnan(values).mean(axis=0)
    if np.any(miss > 0):
        report = ", ".join(f"{names[k]}: {miss[k]:.1%}"
                           for k in np.flatnonzero(miss > 0))
        raise DataError(f"{path} has missing values (imputation is out of "
                        f"scope) — {report}")


def _preprocess(names: list[str], values: np.ndarray, log_transform: bool,
                standardize: bool, label: str, log: list[str]) -> np.ndarray:
    if log_transform:
        if np.any(values <= 0):
            bad = [names[k] for k in np.flatnonzero((values <= 0).any(axis=0))]
            raise DataError(f"log transform needs strictly positive {label} "
                            f"columns; nonpositive values in {bad}")
        values = np.log(values)
        log.append(f"{label}: log transform")
    if standardize:
        mean = values.mean(axis=0)
        sd = values.std(axis=0)  # population (1/n) variance convention
        if np.any(sd == 0):
            bad = [names[k] for k in np.flatnonzero(sd == 0)]
            raise DataError(f"cannot standardize constant {label} columns {bad}")
        values = (values - mean) / sd
        log.append(f"{label}: z-score, population-variance convention")
    return values


def build_weights_from_edges(path: str | Path, n: int) -> spatial.SpatialWeights:
    names, edges = _read_matrix(path)
    if edges.shape[1] < 2:
        raise DataError(f"{path}: edge list needs source,target columns")
    src = edges[:, 0].astype(int)
    dst = edges[:, 1].astype(int)
    if np.any(src < 0) or np.any(dst < 0) or np.any(src >= n) or np.any(dst >= n):
        raise DataError(f"{path}: edge endpoints outside 0..{n - 1}")
    adj = np.zeros((n, n))
    adj[src, dst] = 1.0
    np.fill_diagonal(adj, 0.0)
    return spatial.row_normalize(adj)


def build_weights_from_coords(path: str | Path, n: int,
                              k: int = 5) -> spatial.SpatialWeights:
    """Symmetric k-nearest-neighbor graph on node coordinates."""
    from scipy.spatial import cKDTree
    names, coords = _read_matrix(path)
    if coords.shape[0] != n:
        raise DataError(f"{path}: {coords.shape[0]} coordinate rows for {n} nodes")
    if k < 1 or k >= n:
        raise DataError(f"k-NN parameter k={k} must lie in 1..{n - 1}")
    tree = cKDTree(coords)
    _, idx = tree.query(coords, k=k + 1)  # nearest neighbor of each point is itself
    adj = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    cols = idx[:, 1:].ravel()
    adj[rows, cols] = 1.0
    adj = np.maximum(adj, adj.T)
    return spatial.row_normalize(adj)


def ingest(y_path: str | Path, x_path: str | Path | None = None,
           edges_path: str | Path | None = None,
           coords_path: str | Path | None = None, k: int = 5,
           log_transform: bool = False, standardize: bool = False) -> Dataset:
    """Read CSVs, validate, preprocess, and assemble the spatial weights."""
    y_names, Y = _read_matrix(y_path)
    _reject_missing(y_names, Y, y_path)
    n = Y.shape[0]
    log: list[str] = []
    Y = _preprocess(y_names, Y, log_transform, standardize, "response", log)

    X = None
    x_names: list[str] = []
    if x_path is not None:
        x_names, X = _read_matrix(x_path)
        _reject_missing(x_names, X, x_path)
        if X.shape[0] != n:
            raise DataError(f"row mismatch: {n} response rows, {X.shape[0]} "
                            "covariate rows")
        X = _preprocess(x_names, X, log_transform, standardize, "covariate", log)

    if (edges_path is None) == (coords_path is None):
        raise click.UsageError("exactly one of an edge list or a coordinate "
                               "file must be given")
    if edges_path is not None:
        W = build_weights_from_edges(edges_path, n)
        log.append(f"weights: row-normalized edge list ({edges_path})")
    else:
        W = build_weights_from_coords(coords_path, n, k=k)
        log.append(f"weights: symmetric {k}-NN on coordinates ({coords_path})")
    return Dataset(Y=Y, X=X, W=W, y_names=y_names, x_names=x_names, log=log)


def _write_manifest(out: Path, command: str, config: dict) -> None:
    manifest = {"command": command, "version": __version__, "config": config}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def _outdir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise click.UsageError(f"output directory {path} not writable: {exc}")
    return out


@click.group()
@click.version_option(__version__)
def cli() -> None:
    """Factor-augmented spatial autoregression toolkit."""


@cli.command()
@click.option("--n", type=int, required=True)
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, default=20, show_default=True)
@click.option("--d", type=int, default=3, show_default=True)
@click.option("--network", type=click.Choice(networks.MODELS), default="DIM",
              show_default=True)
@click.option("--sparsity", type=int, default=None,
              help="Nonzero covariates per component; 0 gives a null design.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True)
def simulate(n, p, q, d, network, sparsity, seed, out):
    """Draw one synthetic dataset and persist it as CSV + manifest."""
    outdir = _outdir(out)
    cfg = dgp.DgpConfig(n=n, p=p, q=q, d=d,
                        network=networks.NetworkSpec(network, n, seed=seed),
                        seed=seed, sparsity=sparsity)
    Y, truth, W = dgp.simulate(cfg)
    dgp.save_dataset(outdir, Y, truth, W, cfg)
    manifest = json.loads((outdir / "manifest.json").read_text())
    manifest.update(command="simulate", version=__version__)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    click.echo(f"wrote dataset to {outdir}")


def _ingest_options(f):
    opts = [
        click.option("--y", "y_path", type=str, required=True,
                     help="Response matrix CSV (n rows, p columns)."),
        click.option("--x", "x_path", type=str, default=None,
                     help="Covariate matrix CSV (n rows, q columns)."),
        click.option("--edges", "edges_path", type=str, default=None,
                     help="Edge-list CSV (source,target)."),
        click.option("--coords", "coords_path", type=str, default=None,
                     help="Node-coordinate CSV for k-NN weights."),
        click.option("--knn", type=int, default=5, show_default=True),
        click.option("--log-transform", is_flag=True),
        click.option("--standardize", is_flag=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@cli.command()
@_ingest_options
@click.option("--stages", type=str, default="scad,cmle,factor,fmle",
              show_default=True)
@click.option("--d-max", type=int, default=5, show_default=True)
@click.option("--holdout-fraction", type=float, default=0.10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=str, required=True)
def fit(y_path, x_path, edges_path, coords_path, knn, log_transform,
        standardize, stages, d_max, holdout_fraction, seed, out):
    """Run the estimation pipeline on CSV inputs."""
    outdir = _outdir(out)
    ds = ingest(y_path, x_path, edges_path, coords_path, k=knn,
                log_transform=log_transform, standardize=standardize)
    try:
        stage_set = harness._validate_stages(tuple(s.strip()
                                                   for s in stages.split(",") if s.strip()))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    if ds.X is None:
        stage_set = tuple(s for s in stage_set if s != "scad")
        X = np.empty((ds.Y.shape[0], 0))
    else:
        X = ds.X
    p = ds.Y.shape[1]
    q = X.shape[1]
    cfg = pipeline.PipelineConfig(d_max=d_max, holdout_fraction=holdout_fraction,
                                  partition_seed=seed)

    rows: list[dict] = []
    try:
        if "factor" not in stage_set:
            supports = [np.arange(q) for _ in range(p)]
            if "scad" in stage_set:
                supports = pipeline.select_supports(ds.Y, X, ds.W, cfg).supports
            ests = cmle.fit_all(ds.Y, X, supports, ds.W)
            for j, e in enumerate(ests):
                rows.append({"component": ds.y_names[j],
                             "rho_cmle": e.rho_hat, "sigma_cmle": e.sigma_hat,
                             "support": ";".join(str(k) for k in supports[j])})
            fac = None
        else:
            supports = None if "scad" in stage_set else [np.arange(q)] * p
            res = pipeline.run_pipeline(ds.Y, X, ds.W, supports=supports,
                                        config=cfg,
                                        standard_errors="fmle" in stage_set)
            fac = res.factor_estimate
            for j in range(p):
                e = res.fmle_estimates[j]
                lo = e.rho_hat - harness.Z975 * e.se_rho if e.se_rho else np.nan
                hi = e.rho_hat + harness.Z975 * e.se_rho if e.se_rho else np.nan
                rows.append({"component": ds.y_names[j],
                             "rho_cmle": res.rho_cmle[j],
                             "rho_fmle": e.rho_hat, "se_rho_fmle": e.se_rho,
                             "ci_lo": lo, "ci_hi": hi, "tau_hat": e.tau_hat,
                             "support": ";".join(str(k) for k in res.supports[j])})
    except (DataError, click.UsageError):
        raise
    except Exception as exc:
        raise EstimationError(f"estimation failed: {exc!r}") from exc

    pd.DataFrame(rows).to_csv(outdir / "components.csv", index=False)
    if fac is not None:
        ev = fac.eigenvalues
        pd.DataFrame({"rank": np.arange(1, ev.size + 1), "eigenvalue": ev,
                      "ratio": np.append(fac.ratios, np.nan)}).to_csv(
            outdir / "factor_diagnostics.csv", index=False)
    _write_manifest(outdir, "fit", {
        "y": str(y_path), "x": str(x_path), "edges": str(edges_path),
        "coords": str(coords_path), "knn": knn, "log_transform": log_transform,
        "standardize": standardize, "stages": list(stage_set), "d_max": d_max,
        "holdout_fraction": holdout_fraction, "seed": seed,
        "preprocessing": ds.log})
    click.echo(f"wrote estimates to {outdir}")


@cli.command()
@click.option("--n", type=int, required=True)
@click.option("--p", type=int, required=True)
@click.option("--q", type=int, default=20, show_default=True)
@click.option("--d", type=int, default=3, show_default=True)
@click.option("--network", type=click.Choice(networks.MODELS), default="DIM",
              show_default=True)
@click.option("--sparsity", type=int, default=None)
@click.option("--replications", "-r", type=int, default=100, show_default=True)
@click.option("--stages", type=str, default="cmle,factor,fmle", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", type=str, required=True)
def experiment(n, p, q, d, network, sparsity, replications, stages, seed,
               workers, out):
    """Run a seeded Monte-Carlo experiment and write its metric report."""
    outdir = _outdir(out)
    try:
        stage_set = harness._validate_stages(tuple(s.strip()
                                                   for s in stages.split(",") if s.strip()))
    except ValueError as exc:
        raise click.UsageError(str(exc))
    cfg = dgp.DgpConfig(n=n, p=p, q=q, d=d,
                        network=networks.NetworkSpec(network, n),
                        sparsity=sparsity)
    spec = harness.ExperimentSpec(dgp=cfg, replications=replications,
                                  stages=stage_set, seed=seed, workers=workers)
    try:
        report = harness.run_experiment(spec)
    except RuntimeError as exc:
        raise EstimationError(str(exc)) from exc
    harness.save_report(report, outdir)
    _write_manifest(outdir, "experiment", {
        "dgp": asdict(cfg), "replications": replications,
        "stages": list(stage_set), "seed": seed, "workers": workers})
    summary = {k: v for k, v in report.to_dict().items()
               if not isinstance(v, list)}
    click.echo(json.dumps(summary, indent=2))


@cli.command()
@_ingest_options
@click.option("--out", type=str, required=True)
def diagnose(y_path, x_path, edges_path, coords_path, knn, log_transform,
             standardize, out):
    """Residual factor diagnostics: eigenvalues, ratios, and network norms."""
    outdir = _outdir(out)
    ds = ingest(y_path, x_path, edges_path, coords_path, k=knn,
                log_transform=log_transform, standardize=standardize)
    X = ds.X if ds.X is not None else np.empty((ds.Y.shape[0], 0))
    p = ds.Y.shape[1]
    q = X.shape[1]
    try:
        supports = [np.arange(q) for _ in range(p)]
        ests = cmle.fit_all(ds.Y, X, supports, ds.W)
        resid = cmle.residuals(ests, ds.Y, X, ds.W)
    except Exception as exc:
        raise EstimationError(f"residual computation failed: {exc!r}") from exc

    cov = np.cov(resid, rowvar=False, bias=True)
    eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
    top = eigvals[:min(30, p)]
    ratios = top[:-1] / np.maximum(top[1:], np.finfo(float).tiny)
    d_hat = int(np.argmax(ratios)) + 1 if ratios.size else 0
    max_ratio = float(ratios.max()) if ratios.size else np.nan
    rho = np.array([e.rho_hat for e in ests])
    Wm = ds.W.matrix
    diag = {
        "eigenvalues": top.tolist(),
        "ratios": ratios.tolist(),
        "selected_factor_count": d_hat,
        "max_ratio": max_ratio,
        "low_confidence": bool(max_ratio < RATIO_CONFIDENCE_THRESHOLD),
        "w_norm_1": float(np.abs(Wm).sum(axis=0).max()),
        "w_norm_inf": float(np.abs(Wm).sum(axis=1).max()),
        "rho_boundary_components": np.flatnonzero(np.abs(rho) > 0.98).tolist(),
        "preprocessing": ds.log,
    }
    (outdir / "diagnostics.json").write_text(json.dumps(diag, indent=2))
    pd.DataFrame({"rank": np.arange(1, top.size + 1), "eigenvalue": top,
                  "ratio": np.append(ratios, np.nan)}).to_csv(
        outdir / "eigenvalues.csv", index=False)
    _write_manifest(outdir, "diagnose", {
        "y": str(y_path), "x": str(x_path), "edges": str(edges_path),
        "coords": str(coords_path), "knn": knn, "log_transform": log_transform,
        "standardize": standardize})
    click.echo(json.dumps({k: diag[k] for k in
                           ("selected_factor_count", "max_ratio",
                            "low_confidence")}, indent=2))


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
