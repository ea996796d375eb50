"""The randomization test: adjusted outcomes, test statistics with a
propensity-derived covariate, Monte Carlo p-values, test inversion and
Fisher combination.

The test holds the adjusted outcomes fixed, redraws the instrument from
its conditional randomization distribution (the meiosis model given the
adjustment set), and compares the observed statistic to the draws.
Statistics are oriented so that larger means more evidence against the
null; the default p-value is the upper-tail count, with ties counting
toward the p-value. A lower-tail variant sits behind the ``tail`` flag.

Monte Carlo draws are processed in fixed-size blocks, each with its own
derived random stream, so results are bit-identical for a given seed
regardless of thread count or execution order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import stats as spstats

from .adjustment import AdjustmentSpec
from .data import Cohort
from .errors import ConfigError
from .meiosis import MeiosisModel, batch_propensity
from .streams import Seed, generator

logger = logging.getLogger("aemr.randtest")

STATISTICS = ("plain_F", "clever_F", "weighted_diff")
TAILS = ("upper", "lower")

_DRAW_BLOCK = 256  # draws per derived stream; fixed, part of the result definition


def adjusted_outcome(Y, D, beta0: float):
    """Outcome with the hypothesized effect removed: Y - beta0 * D.

    Constant under the sharp null with effect beta0, which is what makes
    the randomization test exact. Accepts scalars or arrays.
    """
    return Y - beta0 * D


def clever_covariate(z: int, pi: float) -> float:
    """Propensity-based covariate z/pi - (1-z)/(1-pi).

    Centers and scales the instrument by its randomization distribution.
    A degenerate propensity (0 or 1) means the haplotype never varies:
    the unit is non-informative and contributes 0.
    """
    if z not in (0, 1):
        raise ValueError("haplotype instrument must be 0 or 1")
    if not 0.0 <= pi <= 1.0:
        raise ValueError(f"propensity {pi} outside [0, 1]")
    if pi <= 0.0 or pi >= 1.0:
        return 0.0
    return z / pi - (1 - z) / (1 - pi)


def _clever_columns(z, center, var):
    """Vectorized (z - E[z]) / Var(z); zero where the variance vanishes."""
    with np.errstate(divide="ignore", invalid="ignore"):
        x = (z - center) / var
    return np.where(var > 0.0, x, 0.0)


class StatValue(NamedTuple):
    value: float
    informative: bool


def _ols_f(Q, cols) -> StatValue:
    """Overall F-statistic of an intercept-plus-columns least squares fit.

    Rank-deficient designs (e.g. a constant instrument) reduce the tested
    degrees of freedom; with nothing left to test the statistic is 0 and
    flagged non-informative.
    """
    n = Q.size
    design = np.column_stack([np.ones(n), cols])
    coef, _, rank, _ = np.linalg.lstsq(design, Q, rcond=None)
    resid = Q - design @ coef
    rss1 = float(resid @ resid)
    dev = Q - Q.mean()
    rss0 = float(dev @ dev)
    q_eff = int(rank) - 1
    dof = n - int(rank)
    if q_eff < 1 or dof < 1 or rss0 <= 0.0:
        return StatValue(0.0, False)
    if rss1 <= rss0 * 1e-14:
        return StatValue(math.inf, True)
    return StatValue(((rss0 - rss1) / q_eff) / (rss1 / dof), True)


def _as_columns(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    return arr[:, None] if arr.ndim == 1 else arr


def compute_statistic(kind: str, Q, Z=None, X=None) -> StatValue:
    """Evaluate a test statistic; larger = more evidence against the null.

    Kinds:
        ``weighted_diff``: |sum_i Q_i X_i| per instrument, summed across
            instruments (the absolute value orients the statistic).
        ``plain_F``: overall F from regressing Q on the instrument column(s).
        ``clever_F``: overall F from regressing Q on the instrument
            column(s) and their clever covariates.
    """
    if kind not in STATISTICS:
        raise ConfigError(f"unknown statistic {kind!r}; choose from {STATISTICS}")
    Q = np.asarray(Q, dtype=float)
    if kind == "weighted_diff":
        Xc = _as_columns(X)
        if Xc.shape[0] != Q.size:
            raise ValueError("Q and X must have equal length")
        value = float(np.sum(np.abs(Q @ Xc)))
        return StatValue(value, bool(np.any(Xc != 0.0)))
    Zc = _as_columns(Z)
    if Zc.shape[0] != Q.size:
        raise ValueError("Q and Z must have equal length")
    if kind == "plain_F":
        return _ols_f(Q, Zc)
    Xc = _as_columns(X)
    return _ols_f(Q, np.hstack([Zc, Xc]))


@dataclass(frozen=True)
class RandomizationResult:
    """Observed statistic, Monte Carlo summary, and p-values of one test."""

    observed_stat: float
    draws: int
    num_geq: int
    p_value: float
    p_value_corrected: float
    seed: Optional[int]
    beta0: float
    statistic: str
    tail: str
    instruments: tuple
    informative: bool

    def __post_init__(self):
        if not (0 <= self.num_geq <= self.draws):
            raise ValueError("draw count out of range")


# ---------------------------------------------------------------------------
# propensity preparation and counterfactual sampling
# ---------------------------------------------------------------------------


def _unlinked_block(gaps_cm: np.ndarray, j: int, p: int) -> tuple:
    """Bounds of the maximal block around locus j with no infinite gap.

    Information cannot flow across an infinite map distance (the chain
    restarts uniformly), so computations may be restricted to the block.
    """
    inf_into = np.flatnonzero(np.isinf(gaps_cm)) + 1  # 1-based loci with inf gap into them
    lo = 1
    hi = p
    for k in inf_into:
        if k <= j:
            lo = int(k)
        elif k > j:
            hi = int(k) - 1
            break
    return lo, hi


@dataclass
class _PreparedSpec:
    spec: AdjustmentSpec
    pi_m: Optional[np.ndarray]  # maternal-side propensities, (N,)
    pi_f: Optional[np.ndarray]
    z_obs: np.ndarray  # observed instrument column, (N,)
    center: np.ndarray  # E[instrument] under the randomization law
    var: np.ndarray  # Var[instrument]


@dataclass
class _Prepared:
    model: MeiosisModel
    specs: list
    n: int

    @property
    def r(self) -> int:
        return len(self.specs)

    def observed_columns(self) -> tuple:
        z = np.column_stack([s.z_obs for s in self.specs])
        x = np.column_stack(
            [_clever_columns(s.z_obs, s.center, s.var) for s in self.specs]
        )
        return z, x


def _per_trio_propensity(model, HM, HF, C, j, span, wlo, whi) -> np.ndarray:
    """Propensities with per-trio windows bounded by heterozygous flanks.

    Each trio's window runs to the parent's nearest heterozygous locus
    within ``span`` loci of the instrument (chromosome end as fallback).
    Trios sharing the same bounds are batched together.
    """
    n = HM.shape[0]
    het = HM != HF
    groups: dict = {}
    for i in range(n):
        l = 0
        for b in range(j - 1, max(0, j - span - 1), -1):
            if het[i, b - 1]:
                l = b
                break
        h = model.p + 1
        for b in range(j + 1, min(model.p, j + span) + 1):
            if het[i, b - 1]:
                h = b
                break
        groups.setdefault((l, h), []).append(i)
    pi = np.empty(n)
    for (l, h), idx in groups.items():
        rows = np.asarray(idx)
        pi[rows] = batch_propensity(
            model, HM[rows], HF[rows], C[rows], j, l, h, wlo=wlo, whi=whi
        )
    return pi


def _prepare(cohort: Cohort, specs: Sequence[AdjustmentSpec], epsilon: float) -> _Prepared:
    model = MeiosisModel(map=cohort.map, epsilon=epsilon)
    mats = cohort.matrices()
    p = model.p
    prepared = []
    for spec in specs:
        j = spec.instrument
        wlo, whi = _unlinked_block(cohort.map.dist_from_prev_cm, j, p)

        def side_pi(parent_m, parent_f, child):
            if spec.per_trio:
                return _per_trio_propensity(
                    model, parent_m, parent_f, child, j, spec.heterozygous_span,
                    wlo, whi,
                )
            l, h = spec.bounds(p)
            return batch_propensity(
                model, parent_m, parent_f, child, j, l, h, wlo=wlo, whi=whi
            )

        pi_m = pi_f = None
        if spec.side in ("maternal", "genotype"):
            pi_m = side_pi(mats["Mm"], mats["Mf"], mats["Zm"])
        if spec.side in ("paternal", "genotype"):
            pi_f = side_pi(mats["Fm"], mats["Ff"], mats["Zf"])
        if spec.side == "maternal":
            z_obs = mats["Zm"][:, j - 1].astype(float)
            center, var = pi_m, pi_m * (1.0 - pi_m)
        elif spec.side == "paternal":
            z_obs = mats["Zf"][:, j - 1].astype(float)
            center, var = pi_f, pi_f * (1.0 - pi_f)
        else:
            z_obs = (mats["Zm"][:, j - 1] + mats["Zf"][:, j - 1]).astype(float)
            center = pi_m + pi_f
            var = pi_m * (1.0 - pi_m) + pi_f * (1.0 - pi_f)
        prepared.append(
            _PreparedSpec(spec=spec, pi_m=pi_m, pi_f=pi_f, z_obs=z_obs, center=center, var=var)
        )
    return _Prepared(model=model, specs=prepared, n=len(cohort))


def _sample_block(prep: _Prepared, seed: Seed, block: int, size: int) -> tuple:
    """Counterfactual instruments and covariates for one block of draws.

    Returns (Zt, Xt), each (size, N, r). The uniform-draw layout per spec
    and side is fixed, so results depend only on (seed, block).
    """
    rng = generator(seed, block)
    n = prep.n
    zt = np.empty((size, n, prep.r))
    xt = np.empty((size, n, prep.r))
    for s_idx, ps in enumerate(prep.specs):
        if ps.spec.side == "maternal":
            z = (rng.random((size, n)) < ps.pi_m).astype(float)
        elif ps.spec.side == "paternal":
            z = (rng.random((size, n)) < ps.pi_f).astype(float)
        else:
            zm = rng.random((size, n)) < ps.pi_m
            zf = rng.random((size, n)) < ps.pi_f
            z = zm.astype(float) + zf
        zt[:, :, s_idx] = z
        xt[:, :, s_idx] = _clever_columns(z, ps.center[None, :], ps.var[None, :])
    return zt, xt


def _stats_over_block(kind: str, Q, zt, xt) -> np.ndarray:
    """Statistic value for every draw in a block."""
    if kind == "weighted_diff":
        return np.abs(np.einsum("n,bnr->br", Q, xt)).sum(axis=1)
    out = np.empty(zt.shape[0])
    for b in range(zt.shape[0]):
        out[b] = compute_statistic(kind, Q, zt[b], xt[b]).value
    return out


def _blocks(K: int):
    return [(i, min(_DRAW_BLOCK, K - i * _DRAW_BLOCK)) for i in range((K + _DRAW_BLOCK - 1) // _DRAW_BLOCK)]


def _map_blocks(fn, blocks, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, blocks))
    return [fn(b) for b in blocks]


def _check_specs(specs, p: int) -> list:
    specs = list(specs)
    if not specs:
        raise ConfigError("at least one instrument is required")
    seen = set()
    windows = []
    for spec in specs:
        if not 1 <= spec.instrument <= p:
            raise ConfigError(f"instrument {spec.instrument} outside 1..{p}")
        if spec.instrument in seen:
            raise ConfigError(f"duplicate instrument {spec.instrument}")
        seen.add(spec.instrument)
        # Per-trio windows have no fixed extent; their separation is the
        # caller's responsibility (heterozygous flanks pin the ancestry).
        windows.append(set(spec.window(p)) if not spec.per_trio else {spec.instrument})
    for i in range(len(windows)):
        for k in range(i + 1, len(windows)):
            if windows[i] & windows[k]:
                raise ConfigError(
                    "joint tests need disjoint instrument windows; "
                    f"instruments {specs[i].instrument} and {specs[k].instrument} overlap "
                    "(closely linked instruments must be tested jointly via the "
                    "multi-target sampler in the meiosis module)"
                )
    return specs


def almost_exact_test(
    cohort: Cohort,
    spec: Union[AdjustmentSpec, Sequence[AdjustmentSpec]],
    beta0: float,
    statistic: str = "clever_F",
    K: int = 1000,
    seed: Seed = 0,
    *,
    epsilon: float = 0.0,
    tail: str = "upper",
    threads: int = 1,
) -> RandomizationResult:
    """Monte Carlo randomization test of the sharp null effect beta0.

    Computes per-trio propensities and the observed statistic, then draws
    K counterfactual instrument vectors from the conditional meiosis
    model, recomputing the clever covariates from the unchanged
    propensities. The p-value is the fraction of draws with a statistic
    at least as extreme as observed (ties included); the corrected
    variant (count + 1) / (K + 1) is valid at finite K and drives
    confidence-interval inversion.

    Several specs run as one joint test (their windows must be disjoint,
    so the counterfactual draws are independent across instruments).
    """
    if K < 1:
        raise ConfigError("K must be at least 1")
    if tail not in TAILS:
        raise ConfigError(f"tail must be one of {TAILS}")
    single = isinstance(spec, AdjustmentSpec)
    specs = _check_specs([spec] if single else spec, cohort.map.p)
    if statistic not in STATISTICS:
        raise ConfigError(f"unknown statistic {statistic!r}; choose from {STATISTICS}")

    prep = _prepare(cohort, specs, epsilon)
    z_obs, x_obs = prep.observed_columns()
    Q = adjusted_outcome(np.asarray([t.outcome for t in cohort.trios]),
                         np.asarray([t.exposure for t in cohort.trios]), beta0)
    observed = compute_statistic(statistic, Q, z_obs, x_obs)

    def count_block(block):
        idx, size = block
        zt, xt = _sample_block(prep, seed, idx, size)
        vals = _stats_over_block(statistic, Q, zt, xt)
        if tail == "upper":
            return int(np.sum(observed.value <= vals))
        return int(np.sum(vals <= observed.value))

    num_geq = sum(_map_blocks(count_block, _blocks(K), threads))
    seed_out = seed if isinstance(seed, int) else None
    return RandomizationResult(
        observed_stat=observed.value,
        draws=K,
        num_geq=num_geq,
        p_value=num_geq / K,
        p_value_corrected=(num_geq + 1) / (K + 1),
        seed=seed_out,
        beta0=float(beta0),
        statistic=statistic,
        tail=tail,
        instruments=tuple(s.instrument for s in specs),
        informative=observed.informative,
    )


@dataclass(frozen=True)
class ConfidenceSet:
    """Grid points retained by inverting the randomization test."""

    grid: tuple
    p_values_corrected: tuple
    alpha: float
    kept: tuple

    def intervals(self) -> list:
        """Contiguous runs of retained grid points as (low, high) pairs."""
        out = []
        start = None
        for value, keep in zip(self.grid, self.kept):
            if keep and start is None:
                start = value
            if not keep and start is not None:
                out.append((start, prev))
                start = None
            prev = value
        if start is not None:
            out.append((start, self.grid[-1]))
        return out


def invert_test(
    cohort: Cohort,
    spec: Union[AdjustmentSpec, Sequence[AdjustmentSpec]],
    statistic: str,
    grid: Sequence[float],
    K: int,
    seed: Seed,
    alpha: float,
    *,
    epsilon: float = 0.0,
    tail: str = "upper",
    threads: int = 1,
) -> ConfidenceSet:
    """Confidence set from test inversion over a grid of effect values.

    The counterfactual draws do not depend on the hypothesized effect, so
    they are sampled once and reused across the grid; a point is retained
    when its corrected p-value exceeds alpha.
    """
    grid = [float(b) for b in grid]
    if not grid or sorted(grid) != grid:
        raise ConfigError("grid must be nonempty and sorted")
    single = isinstance(spec, AdjustmentSpec)
    specs = _check_specs([spec] if single else spec, cohort.map.p)
    prep = _prepare(cohort, specs, epsilon)
    z_obs, x_obs = prep.observed_columns()
    Y = np.asarray([t.outcome for t in cohort.trios])
    D = np.asarray([t.exposure for t in cohort.trios])

    sampled = _map_blocks(
        lambda blk: _sample_block(prep, seed, blk[0], blk[1]), _blocks(K), threads
    )

    pvals = []
    for beta0 in grid:
        Q = adjusted_outcome(Y, D, beta0)
        observed = compute_statistic(statistic, Q, z_obs, x_obs)
        count = 0
        for zt, xt in sampled:
            vals = _stats_over_block(statistic, Q, zt, xt)
            if tail == "upper":
                count += int(np.sum(observed.value <= vals))
            else:
                count += int(np.sum(vals <= observed.value))
        pvals.append((count + 1) / (K + 1))
    kept = tuple(p > alpha for p in pvals)
    return ConfidenceSet(
        grid=tuple(grid), p_values_corrected=tuple(pvals), alpha=alpha, kept=kept
    )


class FisherCombination(NamedTuple):
    statistic: float
    p_value: float
    k: int


def fisher_combine(pvalues: Sequence[float], zero_clamp: Optional[float] = None) -> FisherCombination:
    """Combine independent p-values: -2 sum(log p) against chi-square(2k).

    Zeros (possible for uncorrected Monte Carlo p-values) are clamped to
    ``zero_clamp`` with a warning when one is provided -- callers should
    pass 1/(K+1); otherwise a zero is an error.
    """
    ps = [float(p) for p in pvalues]
    if not ps:
        raise ConfigError("cannot combine an empty list of p-values")
    cleaned = []
    for p in ps:
        if p == 0.0:
            if zero_clamp is None:
                raise ConfigError("p-value of 0 cannot be combined; pass zero_clamp=1/(K+1)")
            logger.warning("clamping p-value 0 to %g before combination", zero_clamp)
            p = zero_clamp
        if not 0.0 < p <= 1.0:
            raise ConfigError(f"p-values must lie in (0, 1], got {p}")
        cleaned.append(p)
    stat = -2.0 * sum(math.log(p) for p in cleaned)
    combined = float(spstats.chi2.sf(stat, 2 * len(cleaned)))
    return FisherCombination(statistic=stat, p_value=combined, k=len(cleaned))
