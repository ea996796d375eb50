"""Randomization inference for within-family Mendelian randomization.

The package models the transmission of parental haplotypes to offspring
as a hidden Markov chain (Poisson crossovers plus rare mutations),
computes the implied propensity score of a genetic instrument given a
conditioning window, and tests sharp null hypotheses about a constant
exposure effect by redrawing the instrument from that distribution.
A fully parameterized synthetic trio-cohort generator supports size and
power studies, and the ``aemr`` CLI binds everything into reproducible
workflows.
"""

__version__ = "0.1.0"

from .adjustment import (
    AdjustmentSpec,
    Partition,
    ValidityReport,
    VariantRoles,
    build_partition,
    check_validity,
    find_heterozygous_flanks,
    heterozygous_flanks_or_ends,
    instruments_independent,
)
from .data import (
    Cohort,
    GeneticMap,
    HaplotypePair,
    MendelianViolation,
    Trio,
    load_cohort,
    load_genetic_map,
    validate_mendelian,
    write_cohort,
    write_genetic_map,
)
from .errors import (
    AemrError,
    ConditioningError,
    ConfigError,
    DataError,
    FlankNotHeterozygous,
    ImpossibleHaplotype,
    LengthMismatch,
    MapParseError,
    MissingMember,
    NegativeDistance,
    NoHeterozygousFlank,
    NonBinaryAllele,
    NonMonotoneIndex,
    UnmatchedFamily,
)
from .experiments import PowerCell, run_power
from .meiosis import (
    FBWeights,
    JointPropensity,
    MeiosisModel,
    Propensity,
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
from .randtest import (
    STATISTICS,
    ConfidenceSet,
    FisherCombination,
    RandomizationResult,
    StatValue,
    adjusted_outcome,
    almost_exact_test,
    clever_covariate,
    compute_statistic,
    fisher_combine,
    invert_test,
)
from .simgen import (
    SimParams,
    SimulatedCohort,
    allele_frequency,
    default_params,
    expected_parent_genotype_mean,
    gen_confounders,
    gen_offspring,
    gen_parental_haplotypes,
    gen_phenotypes,
    make_cohort,
    make_map,
    phenotype_scales,
    sidecar_dict,
)
