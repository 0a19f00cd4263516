"""Deterministic random-generator derivation from integer key tuples."""

import numpy as np

_MOD = 2**63


def derive_rng(*keys: int) -> np.random.Generator:
    """Generator seeded from an ordered tuple of integers.

    The same keys always yield the same stream, independent of platform
    and of any other generator in the process.
    """
    entropy = [int(k) % _MOD for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def child_seed(*keys: int) -> int:
    """A derived integer seed, for configs that store a single seed field."""
    return int(derive_rng(*keys).integers(0, 2**62))
