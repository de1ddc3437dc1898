"""Counter-based random number streams.

All randomness in the package flows through Philox generators keyed by
(seed, *stream) tuples, so any replicate or sub-task can be reproduced in
isolation and results do not depend on execution order or worker count.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Return an independent Philox stream for the given seed and stream key."""
    ss = np.random.SeedSequence((int(seed),) + tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))
