"""Haldane hidden Markov model of meiosis: transition and emission
probabilities, forward/backward weights, propensity scores, and
conditional/unconditional sampling of counterfactual haplotypes.

Model. A gamete's allele at locus j is copied from one of the parent's
two haplotypes, selected by a hidden ancestry state  u_j in {m, f}
(encoded 0/1 here). Crossovers follow a Poisson process along the map, so
the chain stays in its current state between adjacent loci with
probability (1 + exp(-2 d)) / 2 where d is the inter-locus distance in
Morgans; independent per-locus mutations flip the copied allele with
probability epsilon.

Unit note: genetic map files carry centimorgans, but the stay-probability
formula above is the Haldane map function in Morgans. The conversion
(divide by 100) happens exactly once, at :class:`MeiosisModel`
construction; every distance seen by this module afterwards is in
Morgans.

Conditioning sets are restricted to two contiguous flanks around a
window, ``{1..l} + {h..p}`` with ``l < target < h``; arbitrary scattered
sets are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import GeneticMap, HaplotypePair
from .errors import (
    ConditioningError,
    FlankNotHeterozygous,
    ImpossibleHaplotype,
)

ANCESTRY_M = 0  # allele copied from the parent's maternally inherited haplotype
ANCESTRY_F = 1


def transition_stay_prob(dist_morgans: float) -> float:
    """Probability the ancestry state is unchanged across a map distance.

    Equals the probability of an even number of crossovers in ``d``
    Morgans under a Poisson process: (1 + exp(-2 d)) / 2. Monotone
    decreasing from 1 at d = 0 towards 1/2; exactly 1/2 at d = inf
    (unlinked loci).
    """
    d = float(dist_morgans)
    if math.isnan(d) or d < 0:
        raise ValueError(f"distance must be a nonnegative real, got {dist_morgans!r}")
    return 0.5 * (1.0 + math.exp(-2.0 * d))


def emission_prob(z: int, parent_allele: int, epsilon: float) -> float:
    """Probability of observing allele ``z`` given the copied parental allele.

    The copy is faithful with probability 1 - epsilon and flipped by a de
    novo mutation with probability epsilon.
    """
    if z not in (0, 1) or parent_allele not in (0, 1):
        raise ValueError("alleles must be 0 or 1")
    return 1.0 - epsilon if z == parent_allele else float(epsilon)


@dataclass(frozen=True)
class MeiosisModel:
    """A genetic map plus a de novo mutation rate.

    Defines the randomization distribution of offspring haplotypes given
    parental haplotypes. Immutable; all operations on it are pure given an
    explicit random generator.
    """

    map: GeneticMap
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in [0, 0.5), got {self.epsilon}")
        gaps = self.map.dist_from_prev_cm / 100.0  # cM -> Morgans, done once
        object.__setattr__(self, "_gaps_morgans", gaps)
        stay = 0.5 * (1.0 + np.exp(-2.0 * gaps))
        stay[0] = 1.0
        object.__setattr__(self, "_stay_adjacent", stay)

    @property
    def p(self) -> int:
        return self.map.p

    def gaps_morgans(self) -> np.ndarray:
        """Inter-locus distances in Morgans; entry j-1 is the gap into locus j."""
        return self._gaps_morgans

    def stay_between(self, a: int, b: int) -> float:
        """Stay probability between loci a < b (1-based), composing all gaps."""
        if a == b:
            return 1.0
        if a > b:
            a, b = b, a
        d = float(np.sum(self._gaps_morgans[a:b]))
        return 0.5 * (1.0 + math.exp(-2.0 * d))

    def stay_adjacent(self, j: int) -> float:
        """Stay probability across the gap into locus j (1-based, j >= 2)."""
        return float(self._stay_adjacent[j - 1])


# ---------------------------------------------------------------------------
# vectorized kernels
#
# All kernels work on stacked inputs: HM, HF are (N, p) arrays holding the
# parent's two haplotypes and C is the (N, p) observed child haplotype from
# that parent. Loci are 1-based in every signature; rows are trios.
# ---------------------------------------------------------------------------


def _emission_cols(C, HM, HF, j, eps):
    """(N, 2) emission probabilities at locus j for states (m, f)."""
    z = C[:, j - 1]
    e = np.empty((z.size, 2))
    e[:, ANCESTRY_M] = np.where(z == HM[:, j - 1], 1.0 - eps, eps)
    e[:, ANCESTRY_F] = np.where(z == HF[:, j - 1], 1.0 - eps, eps)
    return e


def _normalize_rows(a, context):
    total = a.sum(axis=1)
    bad = total <= 0.0
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise ImpossibleHaplotype(
            f"{context}: observed haplotype has zero probability under the "
            f"model for row {idx} (epsilon = 0 with an allele matching "
            "neither parental copy?)"
        )
    return a / total[:, None], np.log(total)


def _step_matrix(stay):
    return np.array([[stay, 1.0 - stay], [1.0 - stay, stay]])


def _forward(model, HM, HF, C, lo, hi, record=False):
    """Forward pass over loci [lo, hi] with a uniform ancestry prior at lo.

    Returns the row-normalized weights at ``hi`` (N, 2); with ``record``
    also the full (W, N, 2) array and per-locus log normalizers (W, N).
    """
    a = 0.5 * _emission_cols(C, HM, HF, lo, model.epsilon)
    a, logn = _normalize_rows(a, f"forward at locus {lo}")
    if record:
        alphas, lognorms = [a], [logn]
    for k in range(lo + 1, hi + 1):
        trans = _step_matrix(model.stay_adjacent(k))
        a = _emission_cols(C, HM, HF, k, model.epsilon) * (a @ trans)
        a, logn = _normalize_rows(a, f"forward at locus {k}")
        if record:
            alphas.append(a)
            lognorms.append(logn)
    if record:
        return a, np.array(alphas), np.array(lognorms)
    return a


def _backward_entry(model, HM, HF, C, lo, hi, record=False):
    """Backward pass absorbing loci [lo, hi]; returns weights at lo - 1.

    The result row-normalizes P(Z_{lo..hi} | U_{lo-1} = u). With
    ``record`` also returns the in-window weights beta_k for k in
    [lo, hi] (W, N, 2) and their log normalizers.
    """
    n = C.shape[0]
    b = np.ones((n, 2))
    if record:
        betas, lognorms = [b / 2.0], [np.full(n, math.log(2.0))]
    for k in range(hi - 1, lo - 2, -1):
        e = _emission_cols(C, HM, HF, k + 1, model.epsilon)
        trans = _step_matrix(model.stay_adjacent(k + 1))
        b = (e * b) @ trans
        b, logn = _normalize_rows(b, f"backward at locus {k + 1}")
        if record and k >= lo:
            betas.append(b)
            lognorms.append(logn)
    if record:
        return b, np.array(betas[::-1]), np.array(lognorms[::-1])
    return b


def _parse_flanks(conditioning: Iterable[int], target: int, p: int):
    """Validate a conditioning set as two contiguous flanks around target.

    Returns (l, h) with the convention l = 0 for an empty left flank and
    h = p + 1 for an empty right flank.
    """
    loci = sorted(set(int(j) for j in conditioning))
    if any(j < 1 or j > p for j in loci):
        raise ConditioningError(f"conditioning loci must lie in 1..{p}")
    if target in loci:
        raise ConditioningError(f"target locus {target} cannot be conditioned on")
    left = [j for j in loci if j < target]
    right = [j for j in loci if j > target]
    l = left[-1] if left else 0
    h = right[0] if right else p + 1
    if left != list(range(1, l + 1)):
        raise ConditioningError(
            "left flank must be contiguous from locus 1; "
            f"found {left} around target {target}"
        )
    if right != list(range(h, p + 1)):
        raise ConditioningError(
            f"right flank must be contiguous up to locus {p}; "
            f"found {right} around target {target}"
        )
    return l, h


def _posterior_batch(model, HM, HF, C, target, l, h, wlo=1, whi=None):
    """(N, 2) posterior over the ancestry state at ``target`` given the
    flank observations ``{wlo..l} + {h..whi}``."""
    whi = model.p if whi is None else whi
    n = C.shape[0]
    if l >= wlo:
        alpha_l = _forward(model, HM, HF, C, wlo, l)
        left = alpha_l @ _step_matrix(model.stay_between(l, target))
    else:
        left = np.ones((n, 2))
    if h <= whi:
        beta_entry = _backward_entry(model, HM, HF, C, h, whi)  # weights at h-1
        if h - 1 == target:
            right = beta_entry
        else:
            right = beta_entry @ _step_matrix(model.stay_between(target, h - 1))
    else:
        right = np.ones((n, 2))
    post, _ = _normalize_rows(left * right, f"posterior at locus {target}")
    return post


def _allele_prob_from_posterior(model, HM, HF, post, target):
    """Mix the ancestry posterior with emissions to get P(allele = 1)."""
    eps = model.epsilon
    e1m = np.where(HM[:, target - 1] == 1, 1.0 - eps, eps)
    e1f = np.where(HF[:, target - 1] == 1, 1.0 - eps, eps)
    pi = post[:, ANCESTRY_M] * e1m + post[:, ANCESTRY_F] * e1f
    # Homozygous parents make the allele distribution independent of the
    # ancestry posterior; take the exact value to avoid rounding at 0/1.
    hom = HM[:, target - 1] == HF[:, target - 1]
    pi = np.where(hom, e1m, pi)
    return np.clip(pi, 0.0, 1.0)


def batch_propensity(model, HM, HF, C, target, l, h, wlo=1, whi=None) -> np.ndarray:
    """Propensity P(Z_target = 1 | flanks) for N trios at once.

    Arguments:
        HM, HF: (N, p) parental haplotype matrices of one parent
        C:      (N, p) observed child haplotypes inherited from that parent
        target: 1-based instrument locus
        l, h:   flank bounds; conditioning is {wlo..l} + {h..whi}
    """
    post = _posterior_batch(model, HM, HF, C, target, l, h, wlo=wlo, whi=whi)
    return _allele_prob_from_posterior(model, HM, HF, post, target)


# ---------------------------------------------------------------------------
# single-trio operations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FBWeights:
    """Rescaled forward/backward weights over a contiguous window.

    Rows of ``alpha`` and ``beta`` are normalized to sum to one; the
    divided-out normalizers are kept as per-locus log factors so the
    unnormalized weights are recoverable in log space.
    """

    window: tuple
    alpha: np.ndarray  # (W, 2)
    beta: np.ndarray  # (W, 2)
    log_alpha_norm: np.ndarray  # (W,)
    log_beta_norm: np.ndarray  # (W,)

    def log_alpha(self) -> np.ndarray:
        """Unnormalized forward weights, log scale."""
        with np.errstate(divide="ignore"):
            return np.log(self.alpha) + np.cumsum(self.log_alpha_norm)[:, None]

    def log_beta(self) -> np.ndarray:
        """Unnormalized backward weights, log scale."""
        with np.errstate(divide="ignore"):
            rev = np.cumsum(self.log_beta_norm[::-1])[::-1]
            return np.log(self.beta) + rev[:, None]


def _as_rows(parent: HaplotypePair, child_hap) -> tuple:
    hm = parent.maternal[None, :].astype(np.uint8)
    hf = parent.paternal[None, :].astype(np.uint8)
    c = np.asarray(child_hap, dtype=np.uint8)[None, :]
    if c.shape != hm.shape:
        raise ValueError("child haplotype length does not match the parent")
    return hm, hf, c


def forward_backward(
    model: MeiosisModel,
    parent: HaplotypePair,
    child_hap,
    window: Optional[tuple] = None,
) -> FBWeights:
    """Run the forward and backward recursions over a contiguous window.

    The window is treated as self-contained: the ancestry prior at its
    first locus is uniform and the backward weights at its last locus are
    one. Per-locus rescaling prevents underflow on long windows.
    """
    lo, hi = (1, model.p) if window is None else (int(window[0]), int(window[1]))
    if not 1 <= lo <= hi <= model.p:
        raise ValueError(f"window {window} outside 1..{model.p}")
    hm, hf, c = _as_rows(parent, child_hap)
    _, alphas, a_norms = _forward(model, hm, hf, c, lo, hi, record=True)
    _, betas, b_norms = _backward_entry(model, hm, hf, c, lo, hi, record=True)
    return FBWeights(
        window=(lo, hi),
        alpha=alphas[:, 0, :],
        beta=betas[:, 0, :],
        log_alpha_norm=a_norms[:, 0],
        log_beta_norm=b_norms[:, 0],
    )


@dataclass(frozen=True)
class Propensity:
    """P(instrument allele = 1 | adjustment set) at one locus for one trio."""

    pi: float
    locus: int
    side: str = "maternal"

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"propensity {self.pi} outside [0, 1]")

    @property
    def informative(self) -> bool:
        """False when the haplotype cannot vary (propensity exactly 0 or 1)."""
        return 0.0 < self.pi < 1.0


def propensity_score(
    model: MeiosisModel,
    parent: HaplotypePair,
    child_hap,
    target: int,
    conditioning: Iterable[int],
    side: str = "maternal",
) -> Propensity:
    """Propensity of the instrument given two contiguous conditioning flanks.

    ``conditioning`` must equal {1..l} + {h..p} for some l < target < h
    (either flank may be empty). Only the child alleles at conditioned
    loci are read.
    """
    hm, hf, c = _as_rows(parent, child_hap)
    l, h = _parse_flanks(conditioning, int(target), model.p)
    pi = batch_propensity(model, hm, hf, c, int(target), l, h)
    return Propensity(pi=float(pi[0]), locus=int(target), side=side)


def propensity_score_flanked(
    model: MeiosisModel,
    parent: HaplotypePair,
    child_hap,
    target: int,
    flanks: tuple,
    side: str = "maternal",
) -> Propensity:
    """Propensity using only the loci between two heterozygous flanks.

    With no mutations, a heterozygous conditioned locus pins the ancestry
    state there, so the chain outside (b1, b2) carries no extra
    information: this equals :func:`propensity_score` with the full
    complement of the target as conditioning set, at the cost of a much
    shorter recursion.
    """
    b1, b2 = int(flanks[0]), int(flanks[1])
    j = int(target)
    if model.epsilon != 0.0:
        raise ConditioningError(
            "flank-truncated propensities require a mutation rate of zero"
        )
    if not 1 <= b1 < j < b2 <= model.p:
        raise ValueError(f"flanks {flanks} must straddle target {target} within 1..{model.p}")
    for b in (b1, b2):
        if not parent.heterozygous(b):
            raise FlankNotHeterozygous(f"parent is homozygous at flank locus {b}")
    hm, hf, c = _as_rows(parent, child_hap)
    pi = batch_propensity(model, hm, hf, c, j, l=j - 1, h=j + 1, wlo=b1, whi=b2)
    return Propensity(pi=float(pi[0]), locus=j, side=side)


@dataclass(frozen=True)
class JointPropensity:
    """Joint conditional law of the ancestry states at several targets.

    Factorized as an initial distribution at the first target and one
    row-stochastic 2 x 2 step matrix per subsequent target; ``emit1``
    holds P(allele = 1 | state) at each target.
    """

    targets: tuple
    initial: np.ndarray  # (2,)
    steps: tuple  # r - 1 matrices, each (2, 2), rows sum to 1
    emit1: np.ndarray  # (r, 2)

    @property
    def r(self) -> int:
        return len(self.targets)

    def mass(self) -> np.ndarray:
        """Full joint mass over ancestry vectors, shape (2,) * r."""
        out = self.initial.copy()
        for step in self.steps:
            out = out[..., None] * step  # broadcast prior states over next
        return out

    def ancestry_marginal(self, k: int) -> np.ndarray:
        """Marginal state distribution at the k-th target (0-based)."""
        v = self.initial
        for step in self.steps[:k]:
            v = v @ step
        return v

    def allele_pi(self, k: int) -> float:
        """Marginal P(allele = 1) at the k-th target, mixing emissions."""
        return float(self.ancestry_marginal(k) @ self.emit1[k])

    def sample_ancestry(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """Ancestry vectors drawn from the chain: (r,) or, with size, (size, r)."""
        n = 1 if size is None else int(size)
        draws = rng.random((n, self.r))
        u = np.empty((n, self.r), dtype=np.int64)
        u[:, 0] = np.where(draws[:, 0] < self.initial[0], 0, 1)
        for k, step in enumerate(self.steps, start=1):
            stay0 = step[u[:, k - 1], 0]
            u[:, k] = np.where(draws[:, k] < stay0, 0, 1)
        return u[0] if size is None else u


def joint_propensity(
    model: MeiosisModel,
    parent: HaplotypePair,
    child_hap,
    targets: Sequence[int],
    conditioning: Iterable[int],
) -> JointPropensity:
    """Joint randomization distribution of several instruments in one window.

    The chain factorizes over the ordered targets: the first target's
    state is distributed as in :func:`propensity_score`, and each later
    state depends on its predecessor and the right flank only. Marginals
    agree with the single-target propensities.
    """
    targets = tuple(int(j) for j in targets)
    if not targets or list(targets) != sorted(set(targets)):
        raise ValueError("targets must be distinct and increasing")
    hm, hf, c = _as_rows(parent, child_hap)
    p = model.p
    l, h = _parse_flanks(conditioning, targets[0], p)
    if not all(l < j < h for j in targets):
        raise ConditioningError(
            f"all targets {targets} must lie inside the window ({l}, {h})"
        )

    if h <= p:
        beta_entry = _backward_entry(model, hm, hf, c, h, p)[0]  # weights at h-1
    else:
        beta_entry = np.ones(2)

    def right_factor(j):
        if h > p:
            return np.ones(2)
        if h - 1 == j:
            return beta_entry
        return beta_entry @ _step_matrix(model.stay_between(j, h - 1))

    j1 = targets[0]
    if l >= 1:
        alpha_l = _forward(model, hm, hf, c, 1, l)[0]
        left = alpha_l @ _step_matrix(model.stay_between(l, j1))
    else:
        left = np.ones(2)
    init = left * right_factor(j1)
    total = init.sum()
    if total <= 0:
        raise ImpossibleHaplotype(f"zero-probability conditioning around locus {j1}")
    init = init / total

    steps = []
    for prev, j in zip(targets, targets[1:]):
        trans = _step_matrix(model.stay_between(prev, j))
        weighted = trans * right_factor(j)[None, :]
        steps.append(weighted / weighted.sum(axis=1, keepdims=True))

    eps = model.epsilon
    emit1 = np.empty((len(targets), 2))
    for k, j in enumerate(targets):
        emit1[k, ANCESTRY_M] = 1.0 - eps if parent.maternal[j - 1] == 1 else eps
        emit1[k, ANCESTRY_F] = 1.0 - eps if parent.paternal[j - 1] == 1 else eps
    return JointPropensity(targets=targets, initial=init, steps=tuple(steps), emit1=emit1)


def sample_conditional_haplotype(
    model: MeiosisModel,
    parent: HaplotypePair,
    child_hap,
    targets: Sequence[int],
    conditioning: Iterable[int],
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw counterfactual instrument alleles at the targets.

    Ancestry states are drawn from :func:`joint_propensity`, then alleles
    are emitted with the model's mutation rate. Deterministic given the
    generator state.
    """
    jp = joint_propensity(model, parent, child_hap, targets, conditioning)
    states = jp.sample_ancestry(rng)
    alleles = np.empty(len(jp.targets), dtype=np.uint8)
    for k, (j, u) in enumerate(zip(jp.targets, states)):
        src = parent.maternal if u == ANCESTRY_M else parent.paternal
        alleles[k] = src[j - 1]
    if model.epsilon > 0.0:
        flips = rng.random(len(jp.targets)) < model.epsilon
        alleles = alleles ^ flips.astype(np.uint8)
    return alleles


def sample_unconditional_haplotype(
    model: MeiosisModel,
    parent: HaplotypePair,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw a full gamete haplotype from the meiosis model.

    The ancestry chain starts uniform and evolves with the map's stay
    probabilities; alleles are copied from the selected parental
    haplotype and flipped with probability epsilon.
    """
    hm = parent.maternal[None, :]
    hf = parent.paternal[None, :]
    return _sample_unconditional_batch(model, hm, hf, rng)[0]


def _sample_unconditional_batch(model, HM, HF, rng) -> np.ndarray:
    """(N, p) gamete haplotypes, one per row of the parental matrices."""
    n, p = HM.shape
    u = rng.random((n, p))
    states = np.empty((n, p), dtype=bool)
    states[:, 0] = u[:, 0] < 0.5
    switch = 1.0 - model._stay_adjacent
    for j in range(1, p):
        states[:, j] = states[:, j - 1] ^ (u[:, j] < switch[j])
    out = np.where(states, HF, HM).astype(np.uint8)
    if model.epsilon > 0.0:
        flips = rng.random((n, p)) < model.epsilon
        out ^= flips.astype(np.uint8)
    return out


def genotype_propensity(pi_maternal, pi_paternal) -> np.ndarray:
    """Distribution of the genotype 0/1/2 from two haplotype propensities.

    The two meioses are independent, so the allele count is the sum of two
    independent Bernoulli draws.
    """
    pm = pi_maternal.pi if isinstance(pi_maternal, Propensity) else float(pi_maternal)
    pf = pi_paternal.pi if isinstance(pi_paternal, Propensity) else float(pi_paternal)
    if isinstance(pi_maternal, Propensity) and isinstance(pi_paternal, Propensity):
        if pi_maternal.locus != pi_paternal.locus:
            raise ValueError("both propensities must describe the same locus")
    if not (0.0 <= pm <= 1.0 and 0.0 <= pf <= 1.0):
        raise ValueError("propensities must lie in [0, 1]")
    return np.array([(1.0 - pm) * (1.0 - pf), pm * (1.0 - pf) + (1.0 - pm) * pf, pm * pf])
