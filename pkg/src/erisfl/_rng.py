"""Deterministic random-stream derivation.

Every source of randomness in a run is a separate PCG64 stream derived from
the master seed plus an integer path (purpose tag, node id, round index).
Streams are independent of each other, reproducible across platforms, and can
be re-derived anywhere without threading generator objects through the code.
"""

from __future__ import annotations

import numpy as np

# Purpose tags keep streams for different uses disjoint even when the
# remaining path components coincide.
TAG_MASK = 0
TAG_GRAD = 1
TAG_COMPRESS = 2
TAG_DROPOUT = 3
TAG_DATA = 4
TAG_INIT = 5
TAG_TRACE = 6


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for ``(seed, *path)``.

    Identical arguments always yield an identical stream; any change to the
    path yields a statistically independent one.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)
