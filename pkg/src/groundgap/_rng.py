"""Seed derivation shared by every stochastic stage.

A single user-facing seed fans out into independent streams keyed by
``(seed, stage, index)`` so that results never depend on evaluation order
or on how work is split across processes.
"""

import numpy as np

# Stage identifiers. Values are part of the reproducibility contract; never renumber.
STAGE_PLANTED = 1
STAGE_CONDITIONED = 2
STAGE_EIGENSOLVER = 3
STAGE_ANNEALER = 4
STAGE_SWEEP = 5
STAGE_FIT = 6


def derive_seed(seed: int, stage: int, *index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, stage, *map(int, index)])


def stream(seed: int, stage: int, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stage, *index))


def child_seed(seed: int, stage: int, *index: int) -> int:
    """Collapse a derived stream into a plain 63-bit integer seed."""
    return int(derive_seed(seed, stage, *index).generate_state(1, np.uint64)[0] >> np.uint64(1))
