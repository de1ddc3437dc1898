"""Shared fixtures and the experiment-report cache used by the acceptance gate."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from fsar import dgp, harness, networks, spatial

CACHE_DIR = Path(__file__).parent / "_report_cache"


@pytest.fixture(scope="session")
def small_weights() -> spatial.SpatialWeights:
    return spatial.row_normalize(
        networks.generate(networks.NetworkSpec("DIM", 120, seed=5)))


@pytest.fixture(scope="session")
def small_dataset():
    cfg = dgp.DgpConfig(n=300, p=12, q=8, d=2,
                        network=networks.NetworkSpec("DIM", 300, seed=1), seed=1)
    Y, truth, W = dgp.simulate(cfg)
    return cfg, Y, truth, W


def _spec_key(spec: harness.ExperimentSpec) -> str:
    ident = {
        "n": spec.dgp.n, "p": spec.dgp.p, "q": spec.dgp.q, "d": spec.dgp.d,
        "network": spec.dgp.network.model, "sparsity": spec.dgp.sparsity,
        "heavy_tails": spec.dgp.heavy_tails,
        "R": spec.replications, "stages": spec.stages, "seed": spec.seed,
        "fixed": spec.fixed_parameters,
    }
    digest = hashlib.sha256(json.dumps(ident, sort_keys=True,
                                       default=str).encode()).hexdigest()[:16]
    return digest


def cached_experiment(spec: harness.ExperimentSpec) -> dict:
    """Run an experiment once and cache its aggregate report as JSON.

    Long Monte-Carlo cells are cached on disk so that a rerun of the test
    suite (or a failure in an unrelated test) does not repeat hours of
    computation.  The cache key covers every field that affects the result;
    delete tests/_report_cache to force recomputation.
    """
    CACHE_DIR.mkdir(exist_ok=True)
    path = CACHE_DIR / f"{_spec_key(spec)}.json"
    if path.exists():
        return json.loads(path.read_text())
    report = harness.run_experiment(spec)
    payload = report.to_dict()
    path.write_text(json.dumps(payload))
    return payload


def rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)
