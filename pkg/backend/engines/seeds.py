"""Seed splitting shared by the randomized stages."""

from __future__ import annotations

import numpy as np

# Stage indices used under the run seed; recorded in run metadata.
SYNTHETIC_STAGE = 0
KMEANS_STAGE = 1

SEED_SCHEME = (
    "numpy SeedSequence([seed, *path]).generate_state(1, uint64); "
    "synthetic=[seed, 0], kmeans=[seed, 1], kmeans restart r=[kmeans_seed, r]"
)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic 64-bit child seed for ``seed`` along ``path``."""
    sequence = np.random.SeedSequence([int(seed), *(int(p) for p in path)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))
