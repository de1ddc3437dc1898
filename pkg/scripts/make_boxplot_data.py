#!/usr/bin/env python3
"""Emit tidy log(MaxErr) quantile tables from the cached acceptance cells.

Writes boxplot_cmle.csv (first-stage error by network and n) and, where the
cells carry factor-augmented fits, boxplot_fmle.csv, to the chosen directory.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import acceptance_cells  # noqa: E402
import conftest  # noqa: E402


def quantile_rows(metric: str):
    rows = []
    for net in acceptance_cells.NETWORKS:
        for n in acceptance_cells.SIZES:
            spec = acceptance_cells.consistency_cell(net, n)
            payload = conftest.cached_experiment(spec)
            vals = payload.get(metric)
            if vals is None:
                continue
            logv = np.log(np.asarray(vals))
            row = {"network": net, "n": n, "p": spec.dgp.p, "metric": metric}
            for q in (0.05, 0.25, 0.50, 0.75, 0.95):
                row[f"q{int(q * 100):02d}"] = float(np.quantile(logv, q))
            rows.append(row)
    return rows


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="boxplot_data", type=Path)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for metric, name in (("max_err_c", "boxplot_cmle.csv"),
                         ("max_err_f", "boxplot_fmle.csv")):
        rows = quantile_rows(metric)
        if rows:
            pd.DataFrame(rows).to_csv(args.out / name, index=False)
            print(f"wrote {args.out / name} ({len(rows)} cells)")


if __name__ == "__main__":
    main()
