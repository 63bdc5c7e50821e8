"""Keyed RNG streams.

Every random draw in the simulator comes from a stream derived from an
integer key tuple (seed, round, device, step, role, ...).  Streams are
independent of each other and of execution order, which is what makes
per-device work safe to parallelise without losing bit-reproducibility.
"""

from __future__ import annotations

import numpy as np

# role tags used when deriving per-batch streams
ROLE_D = 0
ROLE_D_PRIME = 1
ROLE_D_DOUBLE = 2
ROLE_SELECT = 1001
ROLE_ENV = 1002
ROLE_ALLOC = 1003


def stream(*key: int) -> np.random.Generator:
    """Return a generator keyed to the given integer tuple."""
    if not key:
        raise ValueError("stream key must be nonempty")
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))
