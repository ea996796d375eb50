"""Synthetic trio-cohort generator: correlated parental haplotypes,
family confounders, meiosis-model offspring, and linear structural
equations for exposure and outcome.

Construction, per family:

- Parental haplotypes threshold a latent AR(1) Gaussian (lag-one
  correlation ``rho``) at per-entry Uniform(a, b) thresholds, giving
  linkage disequilibrium between nearby loci.
- Family confounders are centered at the parents' mean allele deviation,
  so genotype and environment are confounded by construction.
- Offspring haplotypes are drawn from the meiosis model on a map with
  Uniform(c, d) inter-locus distances (in Morgans) and infinite gaps at
  fixed separators, making the instrument regions unconditionally
  independent.
- Exposure and outcome follow linear structural equations with genetic,
  confounder and noise terms. The systematic parts are scaled by their
  model-implied standard deviations so that Var(D) = Var(Y) = 1 under a
  null effect; relative variance contributions are preserved.

Everything is driven by one master seed with a fixed draw layout, so a
cohort is bit-reproducible regardless of where or how it is generated.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as spstats
from scipy.integrate import quad

from .adjustment import AdjustmentSpec, VariantRoles
from .data import Cohort, GeneticMap, HaplotypePair, Trio
from .errors import ConfigError
from .meiosis import MeiosisModel, _sample_unconditional_batch
from .streams import Seed, generator


@dataclass(frozen=True)
class SimParams:
    """All knobs of the generative model; defaults match :func:`default_params`."""

    n_trios: int
    p: int = 150
    rho: float = 0.75  # lag-one correlation of the latent Gaussian
    threshold_lo: float = spstats.norm.ppf(0.6)
    threshold_hi: float = spstats.norm.ppf(0.95)
    epsilon: float = 1e-8
    dist_lo: float = 0.0  # inter-locus map distance bounds, Morgans
    dist_hi: float = 0.75
    unlinked_at: tuple = (37, 62, 86, 112)  # loci with an infinite gap before them
    instruments: tuple = (25, 50, 75, 100, 125)
    exposure_causal: tuple = (24, 49, 74, 99, 124)
    gamma: float = math.sqrt(0.1)
    pleiotropic: tuple = (23, 27, 48, 52, 73, 77, 98, 102, 123, 127)
    delta: float = math.sqrt(0.05)
    theta_m: float = math.sqrt(0.3)
    theta_f: float = math.sqrt(0.3)
    theta_c: float = math.sqrt(0.75)
    phi_m: float = math.sqrt(0.3)
    phi_f: float = math.sqrt(0.3)
    phi_c: float = math.sqrt(0.75)
    beta: float = 0.0
    exposure_noise_var: float = 0.7
    outcome_noise_var: float = 0.7

    def __post_init__(self):
        if self.n_trios < 1:
            raise ConfigError("need at least one trio")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if not self.threshold_lo < self.threshold_hi:
            raise ConfigError("threshold bounds must satisfy a < b")
        if not 0.0 <= self.dist_lo <= self.dist_hi:
            raise ConfigError("distance bounds must satisfy 0 <= c <= d")
        for name in ("unlinked_at", "instruments", "exposure_causal", "pleiotropic"):
            loci = getattr(self, name)
            if any(not 1 <= j <= self.p for j in loci):
                raise ConfigError(f"{name} loci must lie in 1..{self.p}")
            object.__setattr__(self, name, tuple(int(j) for j in loci))
        if set(self.exposure_causal) & set(self.pleiotropic):
            raise ConfigError("exposure-causal and pleiotropic loci must be disjoint")


def default_params(n_trios: int = 15000, beta: float = 0.0, **overrides) -> SimParams:
    """Reference parameterization: five instrument regions on 150 loci.

    Each instrument is a non-causal marker next to an exposure-causal
    locus and flanked by two pleiotropic loci; regions are separated by
    infinite map gaps. ``n_trios`` and the true effect are the knobs that
    vary between experiments.
    """
    return SimParams(n_trios=n_trios, beta=beta, **overrides)


def allele_frequency(params: SimParams) -> float:
    """Marginal P(allele = 1) of a parental haplotype entry.

    One minus the average of the normal CDF over the threshold range,
    computed by adaptive quadrature.
    """
    a, b = params.threshold_lo, params.threshold_hi
    integral, _ = quad(spstats.norm.cdf, a, b, epsabs=1e-12, epsrel=1e-12)
    return 1.0 - integral / (b - a)


def expected_parent_genotype_mean(params: SimParams) -> float:
    """Expected per-locus allele count of one parent (two haplotypes)."""
    return 2.0 * allele_frequency(params)


def phenotype_scales(params: SimParams) -> tuple:
    """Model-implied standard deviations of the raw exposure and outcome.

    Used to standardize D and Y(0) to unit variance. Leading terms only:
    cross-locus linkage and genotype-confounder covariances contribute
    well under one percent here and are neglected.
    """
    q = allele_frequency(params)
    var_z = 2.0 * q * (1.0 - q)  # genotype variance at one locus
    var_parent_mean = 2.0 * q * (1.0 - q) / params.p
    var_conf = 1.0 + var_parent_mean  # family confounder: unit noise + centering term
    var_d = (
        params.gamma**2 * var_z * len(params.exposure_causal)
        + (params.theta_m**2 + params.theta_f**2) * var_conf
        + params.theta_c**2
        + params.exposure_noise_var
    )
    var_y0 = (
        params.delta**2 * var_z * len(params.pleiotropic)
        + (params.phi_m**2 + params.phi_f**2) * var_conf
        + params.phi_c**2
        + params.outcome_noise_var
    )
    return math.sqrt(var_d), math.sqrt(var_y0)


def make_map(params: SimParams, rng: np.random.Generator) -> GeneticMap:
    """Draw the chromosome map: Uniform(c, d) Morgan gaps, infinite at the
    fixed separators. Distances are stored in centimorgans."""
    gaps_m = rng.uniform(params.dist_lo, params.dist_hi, size=params.p)
    gaps_m[0] = 0.0
    for k in params.unlinked_at:
        gaps_m[k - 1] = math.inf
    ids = tuple(f"snp{j:04d}" for j in range(1, params.p + 1))
    return GeneticMap(ids=ids, dist_from_prev_cm=gaps_m * 100.0, chromosome="sim")


def _latent_ar1(rng, n, p, rho) -> np.ndarray:
    eta = rng.standard_normal((n, p))
    x = np.empty((n, p))
    x[:, 0] = eta[:, 0]
    innov = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        x[:, j] = rho * x[:, j - 1] + innov * eta[:, j]
    return x


def gen_parental_haplotypes(params: SimParams, rng: np.random.Generator, n: Optional[int] = None) -> dict:
    """Draw the four parental haplotype matrices for ``n`` families.

    Each haplotype thresholds its own latent AR(1) Gaussian at entrywise
    Uniform(a, b) thresholds; thresholds are drawn independently per
    haplotype entry. Returns {"Mm", "Mf", "Fm", "Ff"}, each (n, p) of 0/1.
    """
    n = params.n_trios if n is None else n
    out = {}
    for key in ("Mm", "Mf", "Fm", "Ff"):
        latent = _latent_ar1(rng, n, params.p, params.rho)
        thresholds = rng.uniform(params.threshold_lo, params.threshold_hi, size=(n, params.p))
        out[key] = (latent > thresholds).astype(np.uint8)
    return out


def gen_confounders(haps: dict, params: SimParams, rng: np.random.Generator) -> tuple:
    """Family confounders (C^m, C^f, C).

    The parental confounders are unit-variance normals centered at each
    family's mean parental allele deviation from its expectation, tying
    the confounder to the genotypes; C is an independent standard normal.
    """
    mu = expected_parent_genotype_mean(params)
    mean_m = (haps["Mm"].astype(float) + haps["Mf"]).mean(axis=1)
    mean_f = (haps["Fm"].astype(float) + haps["Ff"]).mean(axis=1)
    n = mean_m.size
    c_m = (mean_m - mu) + rng.standard_normal(n)
    c_f = (mean_f - mu) + rng.standard_normal(n)
    c = rng.standard_normal(n)
    return c_m, c_f, c


def gen_offspring(
    model: MeiosisModel,
    mother: HaplotypePair,
    father: HaplotypePair,
    rng: np.random.Generator,
) -> HaplotypePair:
    """Draw one offspring: independent gametes from each parent."""
    zm = _sample_unconditional_batch(model, mother.maternal[None, :], mother.paternal[None, :], rng)[0]
    zf = _sample_unconditional_batch(model, father.maternal[None, :], father.paternal[None, :], rng)[0]
    return HaplotypePair(maternal=zm, paternal=zf)


def _coefficient_vector(p: int, loci: Sequence[int], value: float) -> np.ndarray:
    vec = np.zeros(p)
    vec[np.asarray(loci, dtype=int) - 1] = value
    return vec


def gen_phenotypes(
    params: SimParams,
    Z: np.ndarray,
    c_m: np.ndarray,
    c_f: np.ndarray,
    c: np.ndarray,
    rng: np.random.Generator,
) -> tuple:
    """Exposure and outcome from the linear structural equations.

    ``Z`` is the (n, p) offspring genotype matrix. The genetic,
    confounder and noise parts of each equation are scaled to unit total
    variance (see :func:`phenotype_scales`); the outcome then adds
    ``beta * D``, so the constant-treatment-effect model holds exactly
    with effect ``beta``.
    """
    sd_d, sd_y0 = phenotype_scales(params)
    gamma = _coefficient_vector(params.p, params.exposure_causal, params.gamma)
    delta = _coefficient_vector(params.p, params.pleiotropic, params.delta)
    n = Z.shape[0]
    nu = rng.standard_normal(n) * math.sqrt(params.exposure_noise_var)
    upsilon = rng.standard_normal(n) * math.sqrt(params.outcome_noise_var)
    d_raw = Z @ gamma + params.theta_m * c_m + params.theta_f * c_f + params.theta_c * c + nu
    d = d_raw / sd_d if sd_d > 0.0 else d_raw  # sd 0 means the raw part is identically 0
    y0_raw = Z @ delta + params.phi_m * c_m + params.phi_f * c_f + params.phi_c * c + upsilon
    y0 = y0_raw / sd_y0 if sd_y0 > 0.0 else y0_raw
    y = params.beta * d + y0
    return d, y


@dataclass(frozen=True)
class SimulatedCohort:
    """A generated cohort plus the ground truth needed to analyze it."""

    cohort: Cohort
    roles: VariantRoles
    specs: tuple  # one genotype-side AdjustmentSpec per instrument
    params: SimParams
    seed: Optional[int]


def make_cohort(params: SimParams, master_seed: Seed) -> SimulatedCohort:
    """Generate a full cohort with declared roles and adjustment specs.

    The adjustment window for each instrument j is {j-1, j, j+1}: the
    neighbouring exposure-causal locus stays inside the window (relevance)
    while the flanking pleiotropic loci are conditioned on (exclusion).

    Draw order is fixed (map, parental haplotypes, offspring, confounders,
    phenotype noise), so equal seeds give bit-identical cohorts.
    """
    rng = generator(master_seed)
    gmap = make_map(params, rng)
    model = MeiosisModel(map=gmap, epsilon=params.epsilon)
    n = params.n_trios

    haps = gen_parental_haplotypes(params, rng, n)
    zm = _sample_unconditional_batch(model, haps["Mm"], haps["Mf"], rng)
    zf = _sample_unconditional_batch(model, haps["Fm"], haps["Ff"], rng)
    c_m, c_f, c = gen_confounders(haps, params, rng)
    genotypes = zm.astype(np.int64) + zf
    d, y = gen_phenotypes(params, genotypes, c_m, c_f, c, rng)

    trios = []
    for i in range(n):
        trios.append(
            Trio(
                family_id=f"fam{i + 1:06d}",
                mother=HaplotypePair(haps["Mm"][i], haps["Mf"][i]),
                father=HaplotypePair(haps["Fm"][i], haps["Ff"][i]),
                offspring=HaplotypePair(zm[i], zf[i]),
                exposure=float(d[i]),
                outcome=float(y[i]),
            )
        )
    cohort = Cohort(map=gmap, trios=trios)

    declared = set(params.exposure_causal) | set(params.pleiotropic)
    roles = VariantRoles(
        exposure_causal=frozenset(params.exposure_causal),
        pleiotropic=frozenset(params.pleiotropic),
        null=frozenset(range(1, params.p + 1)) - declared,
    )
    specs = tuple(
        AdjustmentSpec.from_locus_radius(j, "genotype", 1, params.p)
        for j in params.instruments
    )
    seed_out = master_seed if isinstance(master_seed, int) else None
    return SimulatedCohort(cohort=cohort, roles=roles, specs=specs, params=params, seed=seed_out)


def sidecar_dict(sim: SimulatedCohort) -> dict:
    """JSON-ready description of a simulated cohort's ground truth."""
    return {
        "seed": sim.seed,
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(sim.params).items()},
        "roles": {
            "exposure_causal": sorted(sim.roles.exposure_causal),
            "pleiotropic": sorted(sim.roles.pleiotropic),
            "null": sorted(sim.roles.null),
        },
        "instruments": [
            {
                "locus": s.instrument,
                "side": s.side,
                "lower": s.lower,
                "upper": s.upper,
            }
            for s in sim.specs
        ],
    }
