"""Deterministic random-stream derivation for Monte Carlo campaigns.

Every random quantity in the package flows from a single master seed.  A
campaign of ``n`` trajectories assigns trajectory ``i`` its own generator,
derived as::

    Generator(PCG64(SeedSequence(entropy=master_seed, spawn_key=(domain, i))))

so results are reproducible and independent of how trajectories are
partitioned across workers.  ``domain`` separates independent random
decisions that apply to the same trajectory (e.g. drawing a tree versus
drawing a random point on it).

The sampling kernels consume variates from a generator in a fixed, documented
order using only two primitives: ``random()`` (uniform doubles in [0, 1)) and
``standard_exponential()``.  Both the compiled and the pure-Python kernel
lanes consume the identical sequence, so the two lanes produce bit-identical
samples for the same seed.
"""

import math

import numpy as np

__all__ = ["trajectory_rng", "geometric_from_uniform", "categorical_from_uniform"]


def trajectory_rng(master_seed: int, index: int, domain: int = 0) -> np.random.Generator:
    """Return the generator owned by trajectory ``index`` of a campaign."""
    if domain == 0:
        key = (index,)
    else:
        key = (domain, index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=master_seed, spawn_key=key)))


def geometric_from_uniform(u: float, log1m_success: float) -> int:
    """Geometric count on {0, 1, 2, ...} by inversion of one uniform draw.

    ``log1m_success`` is ``log(1 - q)`` for success probability ``q``, and
    must be precomputed (both kernel lanes share the constant so their
    floating-point behaviour is identical).  ``q == 1`` must be handled by
    the caller without consuming a uniform.
    """
    return int(math.log1p(-u) / log1m_success)


def categorical_from_uniform(u: float, weights, total: float) -> int:
    """Index into ``weights`` drawn by one uniform; linear cumulative scan."""
    acc = 0.0
    target = u * total
    for idx, w in enumerate(weights):
        acc += w
        if target < acc:
            return idx
    return len(weights) - 1
