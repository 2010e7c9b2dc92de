"""Reproducible seed substreams for simulation, bootstrap, and benchmarks.

Every source of randomness in the package flows through :func:`substream`.
Streams are built on the counter-based Philox bit generator keyed by
``SeedSequence(entropy=seed, spawn_key=path)``, so the stream attached to a
given (seed, path) pair is fixed by those integers alone. Replications,
bootstrap resamples, and oracle runs each use their own path and therefore
produce identical output no matter how work is ordered or parallelised.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for substream ``path`` of master seed ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def entropy_seed() -> int:
    """Draw a fresh master seed from OS entropy (recorded in run manifests)."""
    return int(np.random.SeedSequence().entropy % (2**63))
