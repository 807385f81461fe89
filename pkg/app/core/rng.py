"""
Seeded random streams

Every stream is a Philox counter-based generator keyed by (seed, purpose), so
streams for different purposes never overlap and do not depend on the order
in which they are created.
"""
import numpy as np


# Stable purpose ids; never renumber.
PURPOSES = {
    "simulate": 1,
    "rollout": 2,
    "contraction": 3,
    "dominance": 4,
    "covariance": 5,
    "sweep": 6,
    "basis": 7,
}


def make_rng(seed: int, purpose: str) -> np.random.Generator:
    """Generator for one (seed, purpose) stream"""
    if purpose not in PURPOSES:
        raise KeyError(f"unknown random stream purpose: {purpose}")
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be in [0, 2**64): {seed}")
    key = (PURPOSES[purpose] << 64) | int(seed)
    return np.random.Generator(np.random.Philox(key=key))
