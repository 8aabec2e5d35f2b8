"""
Seeded random generators for reproducible runs.

Every run owns exactly one generator. The bit generator is PCG64, whose
output stream is specified independently of platform, so the same seed
yields the same trace everywhere numpy runs.
"""

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Create the generator for one run from an integer seed."""
    if seed is None or int(seed) < 0:
        raise ValueError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed)))
