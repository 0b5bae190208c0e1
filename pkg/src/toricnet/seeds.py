"""Deterministic RNG substreams.

Every stochastic routine in the package draws from a substream addressed by
(seed, namespace, *indices).  Streams with different addresses are
statistically independent, so work can be parallelized per sample without
changing results, and any run is bit-exact reproducible from its seed.
"""

from __future__ import annotations

import numpy as np

# Namespace constants keep unrelated consumers of the same user seed apart.
NS_DATASET = 0   # training-set chain sampling
NS_EVAL = 1      # benchmark test-set chain sampling
NS_DECODE = 2    # per-chain decoder randomness
NS_TRAIN = 3     # parameter init, epoch shuffles, CD chains
NS_GRID = 4      # per-grid-point training seeds
NS_VALID = 5     # grid-search validation chains


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator addressed by (seed, *path)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), *map(int, path))))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, *path) into a single 63-bit integer seed."""
    ss = np.random.SeedSequence(entropy=(int(seed), *map(int, path)))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)
