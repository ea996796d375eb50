"""Size and power experiments on synthetic cohorts.

Each replication generates a fresh cohort, prepares the propensities for
the generated instruments once, and evaluates every requested
(statistic, hypothesized effect) cell on a shared set of counterfactual
draws. Replications are independent work items with derived seeds:
``(seed, r, 0)`` generates the cohort, ``(seed, r, 1)`` drives the test
draws, so results are identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import randtest
from .randtest import adjusted_outcome, compute_statistic
from .simgen import SimParams, make_cohort
from .streams import Seed, derive


@dataclass(frozen=True)
class PowerCell:
    """Rejection summary for one (statistic, beta0) combination."""

    statistic: str
    beta0: float
    reps: int
    rejections: int
    alpha: float
    p_values: tuple  # corrected p-value per replication

    @property
    def rate(self) -> float:
        return self.rejections / self.reps


def _replicate(params, specs_epsilon, beta0_grid, statistics, K, seed, rep):
    """One replication: a dict (statistic, beta0) -> corrected p-value."""
    sim = make_cohort(params, derive(seed, rep, 0))
    prep = randtest._prepare(sim.cohort, sim.specs, specs_epsilon)
    z_obs, x_obs = prep.observed_columns()
    Y = np.asarray([t.outcome for t in sim.cohort.trios])
    D = np.asarray([t.exposure for t in sim.cohort.trios])
    draw_seed = derive(seed, rep, 1)
    sampled = [
        randtest._sample_block(prep, draw_seed, idx, size)
        for idx, size in randtest._blocks(K)
    ]
    out = {}
    for beta0 in beta0_grid:
        Q = adjusted_outcome(Y, D, beta0)
        for stat in statistics:
            observed = compute_statistic(stat, Q, z_obs, x_obs)
            count = 0
            for zt, xt in sampled:
                vals = randtest._stats_over_block(stat, Q, zt, xt)
                count += int(np.sum(observed.value <= vals))
            out[(stat, beta0)] = (count + 1) / (K + 1)
    return out


def run_power(
    params: SimParams,
    beta0_grid: Sequence[float],
    statistics: Sequence[str],
    reps: int,
    K: int,
    alpha: float,
    seed: Seed,
    threads: int = 1,
) -> list:
    """Rejection frequencies over replications of the joint instrument test.

    The analysis model reuses the generator's mutation rate, so the
    randomization distribution matches the data-generating meiosis model
    exactly. Returns one :class:`PowerCell` per (statistic, beta0).
    """
    beta0_grid = [float(b) for b in beta0_grid]
    statistics = list(statistics)
    eps = params.epsilon

    def work(rep):
        return _replicate(params, eps, beta0_grid, statistics, K, seed, rep)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(work, range(reps)))
    else:
        per_rep = [work(rep) for rep in range(reps)]

    cells = []
    for stat in statistics:
        for beta0 in beta0_grid:
            ps = tuple(r[(stat, beta0)] for r in per_rep)
            rejections = sum(1 for p in ps if p <= alpha)
            cells.append(
                PowerCell(
                    statistic=stat,
                    beta0=beta0,
                    reps=reps,
                    rejections=rejections,
                    alpha=alpha,
                    p_values=ps,
                )
            )
    return cells
