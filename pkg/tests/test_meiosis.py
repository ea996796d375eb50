import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as spstats

import oracles
from aemr import (
    FlankNotHeterozygous,
    GeneticMap,
    HaplotypePair,
    ImpossibleHaplotype,
    MeiosisModel,
    emission_prob,
    forward_backward,
    genotype_propensity,
    joint_propensity,
    propensity_score,
    propensity_score_flanked,
    sample_conditional_haplotype,
    sample_unconditional_haplotype,
    transition_stay_prob,
)
from aemr.errors import ConditioningError
from conftest import random_map, random_parent_child


def make_model(gaps_cm, eps=0.0):
    gaps = np.asarray(gaps_cm, dtype=float)
    gmap = GeneticMap(ids=tuple(f"s{j}" for j in range(len(gaps))), dist_from_prev_cm=gaps)
    return MeiosisModel(map=gmap, epsilon=eps)


def hap(m, f):
    return HaplotypePair(np.array(m, dtype=np.uint8), np.array(f, dtype=np.uint8))


# ---------------------------------------------------------------------------
# transition and emission
# ---------------------------------------------------------------------------


def test_stay_prob_values():
    assert transition_stay_prob(0.0) == 1.0
    assert transition_stay_prob(math.inf) == 0.5
    assert transition_stay_prob(0.1) == pytest.approx(0.5 * (1 + math.exp(-0.2)), abs=1e-15)


def test_stay_prob_rejects_negative():
    with pytest.raises(ValueError):
        transition_stay_prob(-0.01)


@given(st.floats(min_value=0.0, max_value=50.0), st.floats(min_value=1e-6, max_value=50.0))
def test_stay_prob_monotone_decreasing(d, delta):
    assert transition_stay_prob(d + delta) < transition_stay_prob(d)
    assert 0.5 < transition_stay_prob(d) <= 1.0


@given(st.floats(min_value=0.0, max_value=30.0), st.floats(min_value=0.0, max_value=30.0))
def test_chapman_kolmogorov(d1, d2):
    s1, s2 = transition_stay_prob(d1), transition_stay_prob(d2)
    composed = s1 * s2 + (1 - s1) * (1 - s2)
    assert abs(transition_stay_prob(d1 + d2) - composed) <= 1e-12


def test_emission_values():
    assert emission_prob(1, 1, 1e-8) == 1 - 1e-8
    assert emission_prob(0, 1, 1e-8) == 1e-8
    assert emission_prob(1, 1, 0.0) == 1.0


def test_emission_rejects_bad_allele():
    with pytest.raises(ValueError):
        emission_prob(2, 1, 0.0)


# ---------------------------------------------------------------------------
# forward/backward weights
# ---------------------------------------------------------------------------


def test_forward_base_case_single_het_locus():
    model = make_model([0.0])
    weights = forward_backward(model, hap([1], [0]), np.array([1]))
    alpha = np.exp(weights.log_alpha())
    assert alpha[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert alpha[0, 1] == 0.0


def test_backward_terminal_is_one():
    model = make_model([0.0, 12.0, 30.0])
    parent = hap([1, 0, 1], [0, 1, 1])
    weights = forward_backward(model, parent, np.array([1, 0, 1]))
    beta = np.exp(weights.log_beta())
    assert beta[-1].tolist() == [1.0, 1.0]


@pytest.mark.parametrize("eps", [0.0, 1e-3])
def test_forward_backward_matches_enumeration(rng, eps):
    for _ in range(12):
        p = int(rng.integers(2, 6))
        model = make_model(
            np.concatenate([[0.0], rng.uniform(0, 90, size=p - 1)]), eps
        )
        parent, child = random_parent_child(rng, model)
        weights = forward_backward(model, parent, child)
        gaps = model.gaps_morgans()
        ref_alpha = oracles.brute_forward(gaps, parent.maternal, parent.paternal, child, 1, p, eps)
        ref_beta = oracles.brute_backward(gaps, parent.maternal, parent.paternal, child, 1, p, eps)
        assert np.allclose(np.exp(weights.log_alpha()), ref_alpha, atol=1e-12)
        assert np.allclose(np.exp(weights.log_beta()), ref_beta, atol=1e-12)


def test_forward_backward_impossible_haplotype_raises():
    model = make_model([0.0, 5.0])
    with pytest.raises(ImpossibleHaplotype):
        forward_backward(model, hap([0, 0], [0, 0]), np.array([1, 0]))


def test_rescaling_invariant_under_emission_scaling(rng):
    # Rescaled (row-normalized) weights only depend on emission ratios, so a
    # long window must not underflow: compare a 600-locus window's posterior
    # with the same computation done in two halves bridged analytically.
    p = 600
    model = make_model(np.concatenate([[0.0], np.full(p - 1, 1.0)]))
    parent, child = random_parent_child(rng, model)
    weights = forward_backward(model, parent, child)
    assert np.all(np.isfinite(weights.alpha))
    assert np.all((weights.alpha.sum(axis=1) - 1.0) < 1e-9)
    # unnormalized log weights drift far below float range; the rescaled ones survive
    assert weights.log_alpha()[-1].max() < -100.0


# ---------------------------------------------------------------------------
# propensity scores
# ---------------------------------------------------------------------------


def test_propensity_single_locus_unconditioned():
    model = make_model([0.0])
    assert propensity_score(model, hap([1], [0]), np.array([0]), 1, []).pi == 0.5
    assert propensity_score(model, hap([1], [1]), np.array([1]), 1, []).pi == 1.0


def test_propensity_two_locus_conditioning_pins_ancestry():
    model = make_model([0.0, 10.0])  # 0.1 Morgans between the loci
    parent = hap([1, 1], [0, 0])
    pi = propensity_score(model, parent, np.array([1, 1]), 1, [2])
    assert pi.pi == pytest.approx(0.5 * (1 + math.exp(-0.2)), abs=1e-12)


def test_propensity_rejects_scattered_conditioning():
    model = make_model([0.0, 1.0, 1.0, 1.0, 1.0])
    parent = hap([1, 0, 1, 0, 1], [0, 1, 0, 1, 0])
    with pytest.raises(ConditioningError):
        propensity_score(model, parent, np.array([1, 0, 1, 0, 1]), 3, [1, 5])


@pytest.mark.parametrize("eps", [0.0, 1e-3])
def test_propensity_matches_enumeration(rng, eps):
    for _ in range(20):
        p = int(rng.integers(3, 9))
        model = make_model(np.concatenate([[0.0], rng.uniform(0, 120, size=p - 1)]), eps)
        parent, child = random_parent_child(rng, model)
        j = int(rng.integers(1, p + 1))
        l = int(rng.integers(0, j))
        h = int(rng.integers(j + 1, p + 2))
        B = list(range(1, l + 1)) + list(range(h, p + 1))
        got = propensity_score(model, parent, child, j, B).pi
        want = oracles.brute_propensity(
            model.gaps_morgans(), parent.maternal, parent.paternal, child, j, B, eps
        )
        assert got == pytest.approx(want, abs=1e-10)


def test_propensity_flanked_adjacent_closed_form():
    # flanks right next to the target: two-transition closed form
    model = make_model([0.0, 20.0, 35.0])
    parent = hap([1, 1, 0], [0, 0, 1])
    child = np.array([1, 1, 0])  # pins U = m at both flanks
    got = propensity_score_flanked(model, parent, child, 2, (1, 3)).pi
    s1 = transition_stay_prob(0.20)
    s2 = transition_stay_prob(0.35)
    num_m = s1 * s2
    num_f = (1 - s1) * (1 - s2)
    want = num_m / (num_m + num_f)  # maternal allele at the target is 1
    assert got == pytest.approx(want, abs=1e-12)


def test_propensity_flanked_equals_full_conditioning(rng):
    trials = 0
    while trials < 15:
        p = int(rng.integers(5, 10))
        model = make_model(np.concatenate([[0.0], rng.uniform(0, 90, size=p - 1)]))
        parent, child = random_parent_child(rng, model)
        het = [b for b in range(1, p + 1) if parent.heterozygous(b)]
        inner = [j for j in range(2, p) if any(b < j for b in het) and any(b > j for b in het)]
        candidates = [j for j in inner if j not in het or True]
        if not candidates:
            continue
        j = candidates[int(rng.integers(0, len(candidates)))]
        b1 = max(b for b in het if b < j)
        b2 = min(b for b in het if b > j)
        full = propensity_score(
            model, parent, child, j, [k for k in range(1, p + 1) if k != j]
        ).pi
        flanked = propensity_score_flanked(model, parent, child, j, (b1, b2)).pi
        assert flanked == pytest.approx(full, abs=1e-12)
        trials += 1


def test_propensity_flanked_rejects_homozygous_flank():
    model = make_model([0.0, 5.0, 5.0])
    parent = hap([1, 1, 1], [0, 1, 0])
    with pytest.raises(FlankNotHeterozygous):
        propensity_score_flanked(model, parent, np.array([1, 1, 1]), 2, (1, 3))


# ---------------------------------------------------------------------------
# joint propensity
# ---------------------------------------------------------------------------


def test_joint_single_target_matches_propensity(rng):
    model = make_model([0.0, 8.0, 14.0, 3.0])
    parent, child = random_parent_child(rng, model)
    B = [1, 4]
    jp = joint_propensity(model, parent, child, [2], B)
    pi = propensity_score(model, parent, child, 2, B).pi
    assert jp.allele_pi(0) == pytest.approx(pi, abs=1e-12)


def test_joint_two_targets_matches_enumeration(rng):
    for _ in range(10):
        p = 4
        model = make_model(np.concatenate([[0.0], rng.uniform(0, 100, size=3)]))
        parent, child = random_parent_child(rng, model)
        B = [1, 4]
        jp = joint_propensity(model, parent, child, [2, 3], B)
        want = oracles.brute_ancestry_joint(
            model.gaps_morgans(), parent.maternal, parent.paternal, child, (2, 3), B, 0.0
        )
        assert np.allclose(jp.mass(), want, atol=1e-12)


def test_joint_marginals_match_propensity(rng):
    for _ in range(8):
        p = int(rng.integers(6, 10))
        model = make_model(np.concatenate([[0.0], rng.uniform(0, 60, size=p - 1)]))
        parent, child = random_parent_child(rng, model)
        targets = [2, 3, 4]
        B = [1] + list(range(5, p + 1))
        jp = joint_propensity(model, parent, child, targets, B)
        for k, j in enumerate(targets):
            want = propensity_score(model, parent, child, j, B).pi
            assert jp.allele_pi(k) == pytest.approx(want, abs=1e-10)


def test_joint_unlinked_targets_factorize(rng):
    gaps = [0.0, 5.0, np.inf, 5.0]
    model = make_model(gaps)
    parent, child = random_parent_child(rng, model)
    jp = joint_propensity(model, parent, child, [2, 3], [1, 4])
    mass = jp.mass()
    m0 = mass.sum(axis=1)
    m1 = mass.sum(axis=0)
    assert np.allclose(mass, np.outer(m0, m1), atol=1e-12)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_conditional_sample_homozygous_parent_is_deterministic(rng):
    model = make_model([0.0, 10.0, 10.0])
    parent = hap([1, 1, 0], [1, 1, 0])
    child = np.array([1, 1, 0])
    for _ in range(20):
        alleles = sample_conditional_haplotype(model, parent, child, [2], [1, 3], rng)
        assert alleles.tolist() == [1]


def test_conditional_sample_frequency_matches_propensity(rng):
    model = make_model([0.0, 25.0, 40.0])
    parent = hap([1, 0, 1], [0, 1, 0])
    child = np.array([1, 0, 1])
    pi = propensity_score(model, parent, child, 2, [1, 3]).pi
    n = 100_000
    hits = sum(
        int(sample_conditional_haplotype(model, parent, child, [2], [1, 3], rng)[0])
        for _ in range(n)
    )
    se = math.sqrt(pi * (1 - pi) / n)
    assert abs(hits / n - pi) <= 3 * se


def test_conditional_sample_joint_fit_chi_square(rng):
    # frequencies over all 2^r outcomes match the chain's mass function
    model = make_model([0.0, 15.0, 20.0, 30.0])
    parent = hap([1, 0, 1, 0], [0, 1, 0, 1])
    child = np.array([1, 0, 0, 1])
    targets = [2, 3]
    B = [1, 4]
    jp = joint_propensity(model, parent, child, targets, B)
    mass = jp.mass()
    n = 100_000
    counts = np.zeros((2, 2))
    for _ in range(n):
        a = sample_conditional_haplotype(model, parent, child, targets, B, rng)
        counts[a[0], a[1]] += 1
    expected = mass * n  # epsilon = 0: alleles are a relabeling of ancestry states
    # map ancestry mass to allele mass: state m at target k emits parent's allele
    allele_mass = np.zeros((2, 2))
    for u0 in (0, 1):
        for u1 in (0, 1):
            a0 = parent.maternal[1] if u0 == 0 else parent.paternal[1]
            a1 = parent.maternal[2] if u1 == 0 else parent.paternal[2]
            allele_mass[a0, a1] += mass[u0, u1]
    stat, pvalue = spstats.chisquare(counts.ravel(), allele_mass.ravel() * n)
    assert pvalue > 0.001


def test_conditional_sample_unlinked_targets_uncorrelated(rng):
    model = make_model([0.0, 5.0, np.inf, 5.0])
    parent = hap([1, 0, 1, 0], [0, 1, 0, 1])
    child = np.array([1, 1, 0, 0])
    n = 100_000
    draws = np.array(
        [sample_conditional_haplotype(model, parent, child, [2, 3], [1, 4], rng) for _ in range(n)]
    )
    corr = np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]
    assert abs(corr) <= 3.0 / math.sqrt(n)


def test_unconditional_sample_homozygous_parent(rng):
    model = make_model([0.0, 30.0, 30.0])
    parent = hap([1, 0, 1], [1, 0, 1])
    for _ in range(10):
        assert sample_unconditional_haplotype(model, parent, rng).tolist() == [1, 0, 1]


def test_unconditional_sample_unlinked_loci_independent(rng):
    p = 4
    model = make_model([0.0, np.inf, np.inf, np.inf])
    parent = hap([1] * p, [0] * p)  # het everywhere: allele = ancestry state
    n = 100_000
    draws = np.array([sample_unconditional_haplotype(model, parent, rng) for _ in range(n)])
    # all 2^4 patterns equally likely
    codes = draws @ (1 << np.arange(p))
    counts = np.bincount(codes, minlength=2**p)
    stat, pvalue = spstats.chisquare(counts)
    assert pvalue > 0.001


def test_unconditional_sample_zero_distance_never_recombines(rng):
    p = 6
    model = make_model([0.0] * p)
    parent = hap([1, 0, 1, 0, 1, 0], [0, 1, 1, 0, 0, 1])
    for _ in range(50):
        draw = sample_unconditional_haplotype(model, parent, rng)
        assert (
            np.array_equal(draw, parent.maternal)
            or np.array_equal(draw, parent.paternal)
        )


# ---------------------------------------------------------------------------
# genotype propensity
# ---------------------------------------------------------------------------


def test_genotype_propensity_fair_coins():
    assert np.allclose(genotype_propensity(0.5, 0.5), [0.25, 0.5, 0.25])


def test_genotype_propensity_degenerate():
    dist = genotype_propensity(1.0, 0.0)
    assert dist[1] == 1.0 and dist[0] == 0.0 and dist[2] == 0.0


def test_genotype_propensity_product():
    assert np.allclose(genotype_propensity(0.9, 0.2), [0.08, 0.74, 0.18])


def test_genotype_propensity_locus_mismatch():
    from aemr import Propensity

    with pytest.raises(ValueError):
        genotype_propensity(Propensity(0.5, 1), Propensity(0.5, 2))
