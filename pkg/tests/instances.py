"""Seeded instance generators shared by the test suite.

The randomized selection suites draw K in [8, 16], N in [2, 5], means in
[0.2, 3] kWh and standard deviations in [0.05, 1] kWh; the target is placed
as a fraction of the top-N mean sum so the sign of the optimal rho is known
by construction. The hot-zone reference pool is a fixed-seed 1000-customer
population with gamma-distributed means and 30-80% relative standard
deviations; its companion target/budget come from the minimal budget that
reaches 95% reliability at 800 kWh.
"""

import numpy as np

from drtarget.skp_solver import CandidatePool, SelectionProblem

REFERENCE_SEED = 42
REFERENCE_COUNT = 1000
REFERENCE_TARGET = 800.0
REFERENCE_N = 689  # min N reaching 95% reliability at the reference target
# regeneration fingerprint for the reference pool
REFERENCE_MU_SUM = 983.0113211071423
REFERENCE_SIGMA_SUM = 537.8992242489152


def random_selection_instance(rng, negative_rho: bool) -> SelectionProblem:
    k = int(rng.integers(8, 17))
    n = int(rng.integers(2, 6))
    mu = rng.uniform(0.2, 3.0, size=k)
    sigma = rng.uniform(0.05, 1.0, size=k)
    top = float(np.sort(mu)[-n:].sum())
    if negative_rho:
        target = float(rng.uniform(0.3, 0.95)) * top
    else:
        target = float(rng.uniform(1.05, 1.6)) * top
    return SelectionProblem(mu=mu, var=sigma**2, n_max=n, target=target)


def hot_zone_pool(count: int = REFERENCE_COUNT, seed: int = REFERENCE_SEED) -> CandidatePool:
    rng = np.random.default_rng(seed)
    mu = rng.gamma(shape=4.0, scale=0.25, size=count)
    sigma = mu * rng.uniform(0.3, 0.8, size=count)
    return CandidatePool(
        ids=tuple(f"H{i:06d}" for i in range(count)), mu=mu, sigma=sigma
    )
