#!/usr/bin/env python3
"""Precompute and cache every Monte-Carlo cell used by the acceptance tests.

Results land in tests/_report_cache keyed by the experiment configuration, so
a subsequent `pytest tests/test_acceptance.py` only reads the cache.  Safe to
interrupt and rerun: completed cells are skipped.
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import acceptance_cells  # noqa: E402
import conftest  # noqa: E402


def main() -> None:
    cells = acceptance_cells.all_cells()
    for i, (name, spec) in enumerate(cells, 1):
        t0 = time.time()
        payload = conftest.cached_experiment(spec)
        line = f"[{i}/{len(cells)}] {name}: {time.time() - t0:.0f}s"
        for key in ("merr_c", "merr_f", "rim", "cm"):
            if payload.get(key) is not None:
                line += f" {key}={payload[key]:.4g}"
        print(line, flush=True)


if __name__ == "__main__":
    main()
