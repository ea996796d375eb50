"""Independent oracles used by the test suite.

Everything here recomputes quantities by a different route than the
library: exhaustive enumeration over ancestry vectors or instrument
assignments, and a textbook normal-equations least squares. These stay
deliberately naive; they are the ground truth the fast implementations
are checked against.
"""

from __future__ import annotations

import itertools

import numpy as np


def enumerate_ancestry_weights(gaps_morgans, hm, hf, child, conditioned, eps, wlo, whi):
    """Joint weight of every ancestry vector over the window [wlo, whi].

    Returns (states, weights): states is a (2^W, W) 0/1 matrix of ancestry
    vectors (0 = maternal copy), weights the unnormalized probability
    P(U = u, Z_conditioned = observed). Loci are 1-based; only loci in
    ``conditioned`` contribute emission terms.
    """
    width = whi - wlo + 1
    states = np.array(list(itertools.product((0, 1), repeat=width)), dtype=np.int8)
    weights = np.full(states.shape[0], 0.5)
    for k in range(wlo + 1, whi + 1):
        d = float(np.sum(gaps_morgans[k - 1: k]))
        stay = 0.5 * (1.0 + np.exp(-2.0 * d))
        same = states[:, k - wlo] == states[:, k - 1 - wlo]
        weights = weights * np.where(same, stay, 1.0 - stay)
    for j in sorted(conditioned):
        parent = np.where(states[:, j - wlo] == 0, hm[j - 1], hf[j - 1])
        match = parent == child[j - 1]
        weights = weights * np.where(match, 1.0 - eps, eps)
    return states, weights


def brute_propensity(gaps_morgans, hm, hf, child, target, conditioned, eps, wlo=None, whi=None):
    """P(Z_target = 1 | conditioned loci) by full enumeration."""
    p = len(hm)
    wlo = 1 if wlo is None else wlo
    whi = p if whi is None else whi
    states, weights = enumerate_ancestry_weights(
        gaps_morgans, hm, hf, child, conditioned, eps, wlo, whi
    )
    emit1 = np.where(states[:, target - wlo] == 0, hm[target - 1], hf[target - 1])
    emit1 = np.where(emit1 == 1, 1.0 - eps, eps)
    return float(np.sum(weights * emit1) / np.sum(weights))


def brute_ancestry_joint(gaps_morgans, hm, hf, child, targets, conditioned, eps, wlo=None, whi=None):
    """Joint law of the ancestry states at the targets, shape (2,)*len(targets)."""
    p = len(hm)
    wlo = 1 if wlo is None else wlo
    whi = p if whi is None else whi
    states, weights = enumerate_ancestry_weights(
        gaps_morgans, hm, hf, child, conditioned, eps, wlo, whi
    )
    out = np.zeros((2,) * len(targets))
    cols = [states[:, j - wlo] for j in targets]
    for combo in itertools.product((0, 1), repeat=len(targets)):
        mask = np.ones(states.shape[0], dtype=bool)
        for col, want in zip(cols, combo):
            mask &= col == want
        out[combo] = weights[mask].sum()
    return out / out.sum()


def brute_allele_joint(gaps_morgans, hm, hf, child, targets, conditioned, eps, wlo=None, whi=None):
    """Joint law of the emitted alleles at the targets, shape (2,)*len(targets)."""
    ancestry = brute_ancestry_joint(
        gaps_morgans, hm, hf, child, targets, conditioned, eps, wlo, whi
    )
    r = len(targets)
    out = np.zeros_like(ancestry)
    for ustates in itertools.product((0, 1), repeat=r):
        w = ancestry[ustates]
        if w == 0.0:
            continue
        per_target = []
        for j, u in zip(targets, ustates):
            src = hm[j - 1] if u == 0 else hf[j - 1]
            p1 = 1.0 - eps if src == 1 else eps
            per_target.append((1.0 - p1, p1))
        for alleles in itertools.product((0, 1), repeat=r):
            prob = w
            for k, a in enumerate(alleles):
                prob *= per_target[k][a]
            out[alleles] += prob
    return out


def brute_forward(gaps_morgans, hm, hf, child, lo, hi, eps):
    """Unnormalized forward weights alpha_k(u) for k in [lo, hi] by enumeration."""
    out = np.zeros((hi - lo + 1, 2))
    for k in range(lo, hi + 1):
        states, weights = enumerate_ancestry_weights(
            gaps_morgans, hm, hf, child, range(lo, k + 1), eps, lo, k
        )
        for u in (0, 1):
            out[k - lo, u] = weights[states[:, k - lo] == u].sum()
    return out


def brute_backward(gaps_morgans, hm, hf, child, lo, hi, eps):
    """Unnormalized backward weights beta_k(u) = P(Z_{k+1..hi} | U_k = u)."""
    out = np.ones((hi - lo + 1, 2))
    for k in range(lo, hi):
        # enumerate over [k, hi] with the state at k pinned; prior excluded
        states, weights = enumerate_ancestry_weights(
            gaps_morgans, hm, hf, child, range(k + 1, hi + 1), eps, k, hi
        )
        for u in (0, 1):
            out[k - lo, u] = 2.0 * weights[states[:, 0] == u].sum()  # undo the 1/2 prior
    return out


def exact_pvalue(pis, stat_fn, t_obs, tail="upper"):
    """Exact randomization p-value by enumerating all 2^N assignments.

    ``stat_fn`` maps an instrument assignment vector to a statistic value;
    assignments are weighted by the product of Bernoulli propensities and
    ties count toward the p-value.
    """
    n = len(pis)
    pis = np.asarray(pis, dtype=float)
    total = 0.0
    for bits in itertools.product((0, 1), repeat=n):
        z = np.array(bits, dtype=float)
        w = float(np.prod(np.where(z == 1.0, pis, 1.0 - pis)))
        t = stat_fn(z)
        if tail == "upper":
            if t_obs <= t:
                total += w
        else:
            if t <= t_obs:
                total += w
    return total


def reference_ols_f(Q, cols):
    """Overall F-statistic via explicit normal equations (full-rank designs)."""
    n = len(Q)
    X = np.column_stack([np.ones(n), cols])
    beta = np.linalg.solve(X.T @ X, X.T @ Q)
    resid = Q - X @ beta
    rss1 = float(resid @ resid)
    rss0 = float(np.sum((Q - np.mean(Q)) ** 2))
    k = X.shape[1] - 1
    return ((rss0 - rss1) / k) / (rss1 / (n - k - 1))
