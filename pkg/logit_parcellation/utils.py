"""Seeded randomness helpers shared by the baseline and synthetic generators.

All randomness goes through NumPy's PCG64 bit generator seeded from a
``SeedSequence``, so a (seed, indices) pair reproduces the same stream on
every platform.
"""

import numpy as np

from .errors import ParameterError

RNG_ALGORITHM = "PCG64"


def make_rng(seed, *indices):
    """Create a generator for a master seed and optional sub-stream indices.

    Args:
        seed (int): Non-negative 64-bit master seed.
        *indices (int): Trial, subject or parcel-count indices selecting an
            independent sub-stream.

    Returns:
        numpy.random.Generator: PCG64 generator.
    """
    return np.random.Generator(np.random.PCG64(_seed_sequence(seed, indices)))


def derive_seed(seed, *indices):
    """Derive a 64-bit sub-seed from a master seed and indices.

    Args:
        seed (int): Master seed.
        *indices (int): Path of the sub-stream.

    Returns:
        int: Deterministic 64-bit seed.
    """
    state = _seed_sequence(seed, indices).generate_state(1, dtype=np.uint64)
    return int(state[0])


def _seed_sequence(seed, indices):
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ParameterError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.SeedSequence([seed, *(int(i) for i in indices)])
