"""Construction and validation of sufficient adjustment sets.

An instrument at locus j is analyzed inside an unconditioned window of
loci; everything outside the window is conditioned on (parental
haplotypes there, plus the offspring's haplotypes or genotypes). The
window is bounded either by explicitly chosen flank loci, by a fixed
radius (in loci or map distance), or by the nearest heterozygous loci in
the transmitting parent, which pin the ancestry state when the mutation
rate is zero and make disjoint windows independent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .data import GeneticMap, HaplotypePair
from .errors import ConfigError, NoHeterozygousFlank

logger = logging.getLogger("aemr.adjustment")

SIDES = ("maternal", "paternal", "genotype")


@dataclass(frozen=True)
class VariantRoles:
    """Declared causal roles of loci: exposure-causal, pleiotropic, null.

    The three sets must be pairwise disjoint; together they cover the
    declared subset of loci (roles of undeclared loci are unknown).
    """

    exposure_causal: frozenset
    pleiotropic: frozenset
    null: frozenset = frozenset()

    def __post_init__(self):
        jd = frozenset(int(j) for j in self.exposure_causal)
        jy = frozenset(int(j) for j in self.pleiotropic)
        j0 = frozenset(int(j) for j in self.null)
        if jd & jy or jd & j0 or jy & j0:
            raise ConfigError("variant role sets must be pairwise disjoint")
        object.__setattr__(self, "exposure_causal", jd)
        object.__setattr__(self, "pleiotropic", jy)
        object.__setattr__(self, "null", j0)


@dataclass(frozen=True)
class AdjustmentSpec:
    """One instrument with its conditioning window.

    ``lower`` and ``upper`` are the nearest conditioned loci below and
    above the window (``None`` when the window reaches a chromosome end).
    The derived conditioning set is {1..lower} + {upper..p}.

    Setting ``heterozygous_span`` instead selects per-trio windows: each
    trio's window is bounded by the transmitting parent's nearest
    heterozygous loci within that many loci of the instrument, falling
    back to the chromosome ends.
    """

    instrument: int
    side: str = "maternal"
    lower: Optional[int] = None
    upper: Optional[int] = None
    heterozygous_span: Optional[int] = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise ConfigError(f"side must be one of {SIDES}, got {self.side!r}")
        j = int(self.instrument)
        object.__setattr__(self, "instrument", j)
        lo = None if self.lower is None else int(self.lower)
        hi = None if self.upper is None else int(self.upper)
        if self.heterozygous_span is not None:
            if lo is not None or hi is not None:
                raise ConfigError("per-trio heterozygous windows exclude fixed flanks")
            if int(self.heterozygous_span) < 1:
                raise ConfigError("heterozygous_span must be >= 1")
            object.__setattr__(self, "heterozygous_span", int(self.heterozygous_span))
        if lo is not None and not 1 <= lo < j:
            raise ConfigError(f"lower flank {lo} must satisfy 1 <= lower < {j}")
        if hi is not None and not hi > j:
            raise ConfigError(f"upper flank {hi} must exceed the instrument {j}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def per_trio(self) -> bool:
        return self.heterozygous_span is not None

    @classmethod
    def from_flanks(cls, instrument, side, b1, b2) -> "AdjustmentSpec":
        """Window bounded by two explicit conditioned loci b1 < j < b2."""
        return cls(instrument=instrument, side=side, lower=b1, upper=b2)

    @classmethod
    def from_locus_radius(cls, instrument, side, radius, p) -> "AdjustmentSpec":
        """Window of +- ``radius`` loci around the instrument."""
        if radius < 0:
            raise ConfigError("window radius must be >= 0")
        j = int(instrument)
        lo = j - radius - 1
        hi = j + radius + 1
        return cls(
            instrument=j,
            side=side,
            lower=lo if lo >= 1 else None,
            upper=hi if hi <= p else None,
        )

    @classmethod
    def from_map_distance(cls, gmap: GeneticMap, instrument, side, window_cm) -> "AdjustmentSpec":
        """Window of all loci within ``window_cm`` of the instrument.

        The bounds are the nearest loci strictly farther than ``window_cm``
        on each side; an ``inf`` gap always terminates the window.
        """
        if window_cm < 0:
            raise ConfigError("window distance must be >= 0")
        j = int(instrument)
        lo = None
        dist = 0.0
        for b in range(j - 1, 0, -1):
            dist += gmap.gap_cm(b + 1)
            if dist > window_cm:
                lo = b
                break
        hi = None
        dist = 0.0
        for b in range(j + 1, gmap.p + 1):
            dist += gmap.gap_cm(b)
            if dist > window_cm:
                hi = b
                break
        return cls(instrument=j, side=side, lower=lo, upper=hi)

    def bounds(self, p: int) -> tuple:
        """(l, h) with 0 / p+1 standing in for missing flanks."""
        if self.per_trio:
            raise ConfigError(
                "per-trio heterozygous windows have no fixed bounds; "
                "they are resolved against each trio's parent"
            )
        l = 0 if self.lower is None else self.lower
        h = p + 1 if self.upper is None else self.upper
        if not l < self.instrument < h or h > p + 1:
            raise ConfigError(
                f"window bounds ({self.lower}, {self.upper}) invalid for "
                f"instrument {self.instrument} on a chromosome of {p} loci"
            )
        return l, h

    def window(self, p: int) -> range:
        """Unconditioned loci (the instrument's window), 1-based inclusive."""
        l, h = self.bounds(p)
        return range(l + 1, h)

    def conditioning(self, p: int) -> tuple:
        """Conditioned loci {1..l} + {h..p}, sorted."""
        l, h = self.bounds(p)
        return tuple(range(1, l + 1)) + tuple(range(h, p + 1))


def find_heterozygous_flanks(
    parent: HaplotypePair,
    j: int,
    max_span: int,
    side: str = "parent",
) -> tuple:
    """Nearest heterozygous loci of ``parent`` on each side of locus j.

    Scans outward by locus index (so among loci tied in map distance the
    one giving the smaller window wins) up to ``max_span`` loci away.

    Raises:
        NoHeterozygousFlank: when a side has no heterozygous locus within
            reach; callers may fall back to the chromosome end instead.
    """
    p = parent.p
    if not 1 <= j <= p:
        raise ValueError(f"locus {j} outside 1..{p}")
    b1 = next(
        (b for b in range(j - 1, max(0, j - max_span - 1), -1) if parent.heterozygous(b)),
        None,
    )
    if b1 is None:
        raise NoHeterozygousFlank(
            f"no heterozygous locus within {max_span} loci left of {j} ({side} side)",
            side=side,
            direction="left",
        )
    b2 = next(
        (b for b in range(j + 1, min(p, j + max_span) + 1) if parent.heterozygous(b)),
        None,
    )
    if b2 is None:
        raise NoHeterozygousFlank(
            f"no heterozygous locus within {max_span} loci right of {j} ({side} side)",
            side=side,
            direction="right",
        )
    return b1, b2


def heterozygous_flanks_or_ends(
    parent: HaplotypePair,
    j: int,
    max_span: int,
) -> tuple:
    """Like :func:`find_heterozygous_flanks` but falls back to chromosome ends.

    A side without a heterozygous locus yields ``None`` (window reaches
    the chromosome boundary) and logs a warning; the recursions handle
    boundary windows natively.
    """
    p = parent.p
    b1 = next(
        (b for b in range(j - 1, max(0, j - max_span - 1), -1) if parent.heterozygous(b)),
        None,
    )
    b2 = next(
        (b for b in range(j + 1, min(p, j + max_span) + 1) if parent.heterozygous(b)),
        None,
    )
    if b1 is None:
        logger.warning("no left heterozygous flank for locus %d; using chromosome start", j)
    if b2 is None:
        logger.warning("no right heterozygous flank for locus %d; using chromosome end", j)
    return b1, b2


@dataclass(frozen=True)
class Partition:
    """Chromosome partition into regions separated by conditioned loci.

    ``regions`` and ``separators`` tile 1..p exactly; empty regions are
    permitted (adjacent separators or separators at the ends).
    """

    regions: tuple  # k+1 ranges
    separators: tuple  # k loci

    def __post_init__(self):
        flat = []
        for i, region in enumerate(self.regions):
            flat.extend(region)
            if i < len(self.separators):
                flat.append(self.separators[i])
        if flat != list(range(1, len(flat) + 1)):
            raise ConfigError("regions and separators must tile 1..p in order")

    @property
    def p(self) -> int:
        return sum(len(r) for r in self.regions) + len(self.separators)

    def region_index(self, j: int) -> Optional[int]:
        """Index of the region containing locus j; None if j is a separator."""
        for i, region in enumerate(self.regions):
            if j in region:
                return i
        return None


def build_partition(separators: Iterable[int], p: int) -> Partition:
    """Partition 1..p into the regions between the given conditioned loci."""
    seps = sorted(set(int(b) for b in separators))
    if any(b < 1 or b > p for b in seps):
        raise ConfigError(f"separators must lie in 1..{p}")
    regions = []
    prev = 0
    for b in seps:
        regions.append(range(prev + 1, b))
        prev = b
    regions.append(range(prev + 1, p + 1))
    return Partition(regions=tuple(regions), separators=tuple(seps))


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of checking relevance and exclusion for one instrument window."""

    instrument: int
    window: tuple
    relevance: Optional[bool]
    exclusion: Optional[bool]
    skipped: bool = False
    notes: tuple = ()

    @property
    def ok(self) -> bool:
        return bool(self.relevance) and bool(self.exclusion)


def check_validity(spec: AdjustmentSpec, roles: Optional[VariantRoles], p: int) -> ValidityReport:
    """Check the instrument-validity conditions against declared roles.

    Relevance requires the unconditioned window to contain at least one
    exposure-causal locus; exclusion requires it to contain no pleiotropic
    locus. With no declared roles (real data) the check is skipped with a
    notice.
    """
    if spec.per_trio:
        return ValidityReport(
            instrument=spec.instrument,
            window=(spec.instrument, spec.instrument),
            relevance=None,
            exclusion=None,
            skipped=True,
            notes=("window varies by trio (heterozygous flanks); check each trio's window",),
        )
    window = spec.window(p)
    if roles is None:
        return ValidityReport(
            instrument=spec.instrument,
            window=(window.start, window.stop - 1),
            relevance=None,
            exclusion=None,
            skipped=True,
            notes=("variant roles unknown; validity not checkable from data alone",),
        )
    wset = set(window)
    relevance = bool(wset & roles.exposure_causal)
    overlap = sorted(wset & roles.pleiotropic)
    notes = []
    if not relevance:
        notes.append("window contains no exposure-causal locus")
    if overlap:
        notes.append(f"window contains pleiotropic loci {overlap}")
    return ValidityReport(
        instrument=spec.instrument,
        window=(window.start, window.stop - 1),
        relevance=relevance,
        exclusion=not overlap,
        notes=tuple(notes),
    )


def _involved_parents(side: str) -> tuple:
    if side == "maternal":
        return ("mother",)
    if side == "paternal":
        return ("father",)
    return ("mother", "father")


def instruments_independent(
    spec1: AdjustmentSpec,
    spec2: AdjustmentSpec,
    partition: Partition,
    *,
    mother: Optional[HaplotypePair] = None,
    father: Optional[HaplotypePair] = None,
) -> bool:
    """Whether two instruments are conditionally independent for one family.

    True when the instruments lie in distinct regions of the partition and
    each meiosis they share is pinned by a heterozygous separator between
    them (a heterozygous conditioned locus determines the ancestry state
    there, cutting the chain). Instruments involving disjoint meioses
    (one maternal, one paternal) are always independent.
    """
    r1 = partition.region_index(spec1.instrument)
    r2 = partition.region_index(spec2.instrument)
    if r1 is None or r2 is None or r1 == r2:
        return False
    shared = set(_involved_parents(spec1.side)) & set(_involved_parents(spec2.side))
    if not shared:
        return True
    lo = min(spec1.instrument, spec2.instrument)
    hi = max(spec1.instrument, spec2.instrument)
    between = [b for b in partition.separators if lo < b < hi]
    parents = {"mother": mother, "father": father}
    for name in shared:
        parent = parents[name]
        if parent is None:
            raise ConfigError(
                f"independence of {spec1.side}/{spec2.side} instruments needs "
                f"the {name}'s haplotypes"
            )
        if not any(parent.heterozygous(b) for b in between):
            return False
    return True
