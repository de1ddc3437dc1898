"""Monte-Carlo cell definitions shared by the acceptance gate and the
precompute script (scripts/run_acceptance_cells.py).

Each function returns an ExperimentSpec whose results are cached on disk by
conftest.cached_experiment, keyed on every result-affecting field.
"""

from __future__ import annotations

from fsar import dgp, harness, networks

NETWORKS = ("DIM", "SBM", "LSM")
SIZES = (500, 1000, 1500)


def _cfg(network: str, n: int, p: int, q: int = 20, d: int = 3,
         sparsity: int | None = None) -> dgp.DgpConfig:
    return dgp.DgpConfig(n=n, p=p, q=q, d=d, sparsity=sparsity,
                         network=networks.NetworkSpec(network, n))


def table_cell_dim() -> harness.ExperimentSpec:
    """Estimation-accuracy cell: DIM, n=500, p=50, R=100."""
    return harness.ExperimentSpec(dgp=_cfg("DIM", 500, 50), replications=100,
                                  seed=1000)


def table_cell_sbm() -> harness.ExperimentSpec:
    """Estimation-accuracy cell: SBM, n=1000, p=100, R=100."""
    return harness.ExperimentSpec(dgp=_cfg("SBM", 1000, 100), replications=100,
                                  seed=2000)


def consistency_cell(network: str, n: int) -> harness.ExperimentSpec:
    """First-stage error trend cells: p=100, cmle only, R=100."""
    return harness.ExperimentSpec(dgp=_cfg(network, n, 100), replications=100,
                                  stages=("cmle",), seed=3000)


def selection_cell(network: str, n: int) -> harness.ExperimentSpec:
    """Support-selection cells: p=50, q=20, d=3, R=8 (the trend criterion
    does not pin R; 8 replicates of the full iterated selection per cell
    keep the suite inside a single-core time budget)."""
    return harness.ExperimentSpec(dgp=_cfg(network, n, 50),
                                  replications=8,
                                  stages=("scad", "cmle", "factor"), seed=4000)


def factor_recovery_cell(n: int, p: int) -> harness.ExperimentSpec:
    """Factor-recovery trend cells: DIM, growing (n, p), R=100."""
    return harness.ExperimentSpec(dgp=_cfg("DIM", n, p), replications=100,
                                  stages=("cmle", "factor"), seed=5000)


def calibration_cell() -> harness.ExperimentSpec:
    """SE-calibration cell: DIM, n=1000, p=100, R=500."""
    return harness.ExperimentSpec(dgp=_cfg("DIM", 1000, 100), replications=500,
                                  seed=6000)


def null_selection_cell() -> harness.ExperimentSpec:
    """Null design: all betas zero, q=20, n=1500, p=50, R=100."""
    return harness.ExperimentSpec(dgp=_cfg("DIM", 1500, 50, sparsity=0),
                                  replications=100,
                                  stages=("scad", "cmle", "factor"), seed=7000)


def all_cells():
    """Every cached cell, cheapest first (used by the precompute script)."""
    cells = []
    for n, p in ((500, 50), (1000, 100), (1500, 200)):
        cells.append((f"factor_recovery n={n} p={p}", factor_recovery_cell(n, p)))
    for net in NETWORKS:
        for n in SIZES:
            cells.append((f"consistency {net} n={n}", consistency_cell(net, n)))
    cells.append(("table DIM", table_cell_dim()))
    cells.append(("table SBM", table_cell_sbm()))
    cells.append(("calibration", calibration_cell()))
    cells.append(("null selection", null_selection_cell()))
    for net in NETWORKS:
        for n in SIZES:
            cells.append((f"selection {net} n={n}", selection_cell(net, n)))
    return cells
