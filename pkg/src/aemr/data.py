"""Typed ingestion and validation of genetic maps, phased trio haplotypes
and phenotypes.

File formats (all tab-separated with a header row):

- genetic map:   ``index  id  cM`` -- one row per locus, ``cM`` is the
  distance from the previous locus in centimorgans; the first locus has no
  predecessor and its distance field is ignored. The literal token ``inf``
  encodes an unlinked break.
- haplotypes:    ``family  member  origin  alleles`` -- member is M/F/O
  (mother, father, offspring), origin is m/f (maternally or paternally
  inherited copy), alleles is a string of 0/1 characters of map length.
- phenotypes:    ``family  D  Y`` -- exposure and outcome as decimal reals.

All loaded objects are immutable; loading is single-threaded and the
results can be shared freely across threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    LengthMismatch,
    MapParseError,
    MissingMember,
    NegativeDistance,
    NonBinaryAllele,
    NonMonotoneIndex,
    UnmatchedFamily,
)

logger = logging.getLogger("aemr.data")

_MISSING_TOKENS = {"", "na", "nan", "."}
_FIRST_ROW_PLACEHOLDERS = {"-", "--", ".", "", "na"}


def _read_table(path, expected_header):
    """Read a TSV file, check its header, and yield (line_number, fields)."""
    with open(path, "rt", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    header = lines[0].split("\t")
    if header != list(expected_header):
        raise DataError(
            f"{path}: expected header {list(expected_header)}, found {header}"
        )
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(expected_header):
            raise DataError(
                f"{path}: line {lineno}: expected {len(expected_header)} fields, found {len(fields)}"
            )
        rows.append((lineno, fields))
    return rows


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GeneticMap:
    """Ordered loci on one chromosome with inter-locus genetic distances.

    ``dist_from_prev_cm[k]`` is the distance in centimorgans between locus
    k and locus k+1 (1-based), i.e. the entry for the j-th locus sits at
    index j-1. The entry for the first locus is meaningless and stored as
    0.0 by convention. Distances may be ``inf`` to mark unlinked blocks.
    """

    ids: tuple
    dist_from_prev_cm: np.ndarray
    chromosome: str = "1"

    def __post_init__(self):
        dist = np.asarray(self.dist_from_prev_cm, dtype=float)
        if dist.ndim != 1 or dist.size == 0:
            raise DataError("genetic map needs at least one locus")
        if len(self.ids) != dist.size:
            raise DataError("locus ids and distances disagree in length")
        if np.any(dist[1:] < 0) or np.any(np.isnan(dist[1:])):
            raise NegativeDistance("inter-locus distances must be >= 0")
        dist = dist.copy()
        dist[0] = 0.0
        object.__setattr__(self, "dist_from_prev_cm", _frozen(dist))
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @property
    def p(self) -> int:
        """Number of loci."""
        return self.dist_from_prev_cm.size

    def gap_cm(self, j: int) -> float:
        """Distance in cM between locus j-1 and locus j (1-based, j >= 2)."""
        if not 2 <= j <= self.p:
            raise ValueError(f"locus {j} has no predecessor gap")
        return float(self.dist_from_prev_cm[j - 1])

    def cumulative_cm(self) -> np.ndarray:
        """Cumulative map position of each locus, starting at 0."""
        return np.cumsum(self.dist_from_prev_cm)


@dataclass(frozen=True)
class HaplotypePair:
    """One individual's two phased haplotypes over p loci.

    ``maternal`` is the copy the individual inherited from their mother and
    ``paternal`` the copy from their father; entries are 0/1.
    """

    maternal: np.ndarray
    paternal: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.maternal, dtype=np.uint8)
        f = np.ascontiguousarray(self.paternal, dtype=np.uint8)
        if m.shape != f.shape or m.ndim != 1:
            raise LengthMismatch("haplotype pair must be two equal-length vectors")
        for arr in (m, f):
            if arr.size and arr.max() > 1:
                raise NonBinaryAllele("alleles must be 0 or 1")
        object.__setattr__(self, "maternal", _frozen(m))
        object.__setattr__(self, "paternal", _frozen(f))

    @property
    def p(self) -> int:
        return self.maternal.size

    def allele(self, j: int, origin: str) -> int:
        """Allele at 1-based locus j on the given origin ('m' or 'f')."""
        vec = self.maternal if origin == "m" else self.paternal
        return int(vec[j - 1])

    def heterozygous(self, j: int) -> bool:
        """True if the two copies carry different alleles at locus j."""
        return self.maternal[j - 1] != self.paternal[j - 1]

    def genotype(self) -> np.ndarray:
        """Allele counts 0/1/2 per locus."""
        return self.maternal.astype(np.int64) + self.paternal


@dataclass(frozen=True)
class Trio:
    """A phased parent-offspring trio with offspring phenotypes."""

    family_id: str
    mother: HaplotypePair
    father: HaplotypePair
    offspring: HaplotypePair
    exposure: float
    outcome: float

    def __post_init__(self):
        p = self.mother.p
        if not (self.father.p == p and self.offspring.p == p):
            raise LengthMismatch(
                f"family {self.family_id}: members disagree on locus count"
            )


@dataclass(frozen=True)
class Cohort:
    """A genetic map together with all trios genotyped against it."""

    map: GeneticMap
    trios: tuple

    def __post_init__(self):
        object.__setattr__(self, "trios", tuple(self.trios))
        seen = set()
        for trio in self.trios:
            if trio.family_id in seen:
                raise DataError(f"duplicate family id {trio.family_id!r}")
            seen.add(trio.family_id)
            if trio.mother.p != self.map.p:
                raise LengthMismatch(
                    f"family {trio.family_id}: haplotype length {trio.mother.p} "
                    f"does not match map length {self.map.p}"
                )

    def __len__(self) -> int:
        return len(self.trios)

    def matrices(self) -> dict:
        """Stack the cohort into N x p arrays for vectorized computation.

        Returns a dict with keys ``Mm, Mf, Fm, Ff, Zm, Zf`` (uint8 N x p)
        plus ``D`` and ``Y`` (float N-vectors).
        """
        n = len(self.trios)
        p = self.map.p
        out = {k: np.empty((n, p), dtype=np.uint8) for k in ("Mm", "Mf", "Fm", "Ff", "Zm", "Zf")}
        d = np.empty(n)
        y = np.empty(n)
        for i, t in enumerate(self.trios):
            out["Mm"][i] = t.mother.maternal
            out["Mf"][i] = t.mother.paternal
            out["Fm"][i] = t.father.maternal
            out["Ff"][i] = t.father.paternal
            out["Zm"][i] = t.offspring.maternal
            out["Zf"][i] = t.offspring.paternal
            d[i] = t.exposure
            y[i] = t.outcome
        out["D"] = d
        out["Y"] = y
        return out


@dataclass(frozen=True)
class MendelianViolation:
    """An offspring allele that matches neither parental copy at its origin."""

    family_id: str
    locus: int
    side: str  # "maternal" or "paternal"
    severity: str  # "error" when the model forbids mutations, else "warning"


def load_genetic_map(path) -> GeneticMap:
    """Parse a genetic map TSV into a validated :class:`GeneticMap`.

    The token ``inf`` in the cM column parses to positive infinity. The
    first row's distance is ignored (no predecessor); a placeholder like
    ``-`` is accepted there.

    Raises:
        MapParseError / NonMonotoneIndex / NegativeDistance on bad input.
    """
    rows = _read_table(path, ("index", "id", "cM"))
    if not rows:
        raise MapParseError(f"{path}: no loci")
    ids = []
    dists = []
    for pos, (lineno, (idx_s, ident, cm_s)) in enumerate(rows, start=1):
        try:
            idx = int(idx_s)
        except ValueError:
            raise MapParseError(f"{path}: bad locus index {idx_s!r}", line=lineno)
        if idx != pos:
            raise NonMonotoneIndex(
                f"{path}: locus indices must run 1..p without gaps; "
                f"expected {pos}, found {idx}",
                line=lineno,
            )
        token = cm_s.strip()
        if pos == 1 and token.lower() in _FIRST_ROW_PLACEHOLDERS:
            dist = 0.0
        else:
            try:
                dist = float(token)
            except ValueError:
                raise MapParseError(f"{path}: bad distance {cm_s!r}", line=lineno)
            if np.isnan(dist):
                raise MapParseError(f"{path}: distance is NaN", line=lineno)
            if dist < 0 and pos > 1:
                raise NegativeDistance(
                    f"{path}: negative distance {dist}", line=lineno
                )
        ids.append(ident)
        dists.append(dist if pos > 1 else 0.0)
    return GeneticMap(ids=tuple(ids), dist_from_prev_cm=np.array(dists))


def write_genetic_map(gmap: GeneticMap, path) -> None:
    """Write a map in the TSV format accepted by :func:`load_genetic_map`."""
    with open(path, "wt", encoding="utf-8") as fh:
        fh.write("index\tid\tcM\n")
        for j in range(gmap.p):
            fh.write(f"{j + 1}\t{gmap.ids[j]}\t{float(gmap.dist_from_prev_cm[j])!r}\n")


_MEMBERS = ("M", "F", "O")
_ORIGINS = ("m", "f")


def _parse_alleles(text: str, p: int, where: str) -> np.ndarray:
    if len(text) != p:
        raise LengthMismatch(f"{where}: haplotype length {len(text)}, map length {p}")
    arr = np.frombuffer(text.encode("ascii"), dtype=np.uint8) - ord("0")
    if arr.size and arr.max() > 1:
        bad = text.lstrip("01")[:1]
        raise NonBinaryAllele(f"{where}: allele {bad!r} is not 0/1")
    return arr


def load_cohort(gmap: GeneticMap, haplotype_path, phenotype_path) -> Cohort:
    """Cross-reference haplotype and phenotype files into a validated cohort.

    Every family must contribute exactly six haplotype rows (mother,
    father, offspring; maternal and paternal origin each) and one
    phenotype row. Trios with missing phenotype values are excluded with
    a logged warning; the test has no missing-data mechanism.
    """
    p = gmap.p
    hap_rows = _read_table(haplotype_path, ("family", "member", "origin", "alleles"))
    families: dict = {}
    order = []
    for lineno, (fam, member, origin, alleles) in hap_rows:
        if member not in _MEMBERS:
            raise DataError(
                f"{haplotype_path}: line {lineno}: member must be one of M/F/O, found {member!r}"
            )
        if origin not in _ORIGINS:
            raise DataError(
                f"{haplotype_path}: line {lineno}: origin must be m or f, found {origin!r}"
            )
        if fam not in families:
            families[fam] = {}
            order.append(fam)
        key = (member, origin)
        if key in families[fam]:
            raise DataError(
                f"{haplotype_path}: line {lineno}: duplicate row for family {fam!r} {member}/{origin}"
            )
        families[fam][key] = _parse_alleles(
            alleles, p, f"{haplotype_path}: line {lineno}: family {fam!r} {member}/{origin}"
        )

    pheno_rows = _read_table(phenotype_path, ("family", "D", "Y"))
    phenotypes: dict = {}
    for lineno, (fam, d_s, y_s) in pheno_rows:
        if fam in phenotypes:
            raise DataError(f"{phenotype_path}: line {lineno}: duplicate family {fam!r}")
        if d_s.strip().lower() in _MISSING_TOKENS or y_s.strip().lower() in _MISSING_TOKENS:
            phenotypes[fam] = None
            continue
        try:
            d, y = float(d_s), float(y_s)
        except ValueError:
            raise DataError(
                f"{phenotype_path}: line {lineno}: phenotypes must be decimal reals"
            )
        if np.isnan(d) or np.isnan(y):
            phenotypes[fam] = None
            continue
        phenotypes[fam] = (d, y)

    hap_only = [f for f in order if f not in phenotypes]
    pheno_only = [f for f in phenotypes if f not in families]
    if hap_only or pheno_only:
        raise UnmatchedFamily(
            "families do not match between files; "
            f"haplotypes only: {hap_only[:5]}, phenotypes only: {pheno_only[:5]}"
        )

    trios = []
    for fam in order:
        rows = families[fam]
        missing = [k for m in _MEMBERS for o in _ORIGINS if (k := (m, o)) not in rows]
        if missing:
            raise MissingMember(
                f"family {fam!r} lacks haplotype rows {['/'.join(k) for k in missing]}"
            )
        if phenotypes[fam] is None:
            logger.warning("family %r excluded: missing phenotype value", fam)
            continue
        d, y = phenotypes[fam]
        trios.append(
            Trio(
                family_id=fam,
                mother=HaplotypePair(rows[("M", "m")], rows[("M", "f")]),
                father=HaplotypePair(rows[("F", "m")], rows[("F", "f")]),
                offspring=HaplotypePair(rows[("O", "m")], rows[("O", "f")]),
                exposure=d,
                outcome=y,
            )
        )
    return Cohort(map=gmap, trios=trios)


def write_cohort(cohort: Cohort, haplotype_path, phenotype_path) -> None:
    """Write a cohort back out in the two TSV formats used by the loader."""
    with open(haplotype_path, "wt", encoding="utf-8") as fh:
        fh.write("family\tmember\torigin\talleles\n")
        for t in cohort.trios:
            pairs = (("M", t.mother), ("F", t.father), ("O", t.offspring))
            for member, hap in pairs:
                for origin, vec in (("m", hap.maternal), ("f", hap.paternal)):
                    alleles = "".join(chr(ord("0") + b) for b in vec)
                    fh.write(f"{t.family_id}\t{member}\t{origin}\t{alleles}\n")
    with open(phenotype_path, "wt", encoding="utf-8") as fh:
        fh.write("family\tD\tY\n")
        for t in cohort.trios:
            fh.write(f"{t.family_id}\t{t.exposure!r}\t{t.outcome!r}\n")


def validate_mendelian(trio: Trio, epsilon: float) -> list:
    """List loci where an offspring allele is impossible under inheritance.

    An offspring's maternally-inherited allele must match one of the
    mother's two alleles (and symmetrically for the paternal side). With
    ``epsilon == 0`` such mismatches are errors; with a positive mutation
    rate they are reported as warnings (putative de novo mutations) and do
    not prevent the cohort from being used.
    """
    severity = "error" if epsilon == 0 else "warning"
    out = []
    for side, child, parent in (
        ("maternal", trio.offspring.maternal, trio.mother),
        ("paternal", trio.offspring.paternal, trio.father),
    ):
        bad = (child != parent.maternal) & (child != parent.paternal)
        for j in np.flatnonzero(bad):
            out.append(
                MendelianViolation(
                    family_id=trio.family_id,
                    locus=int(j) + 1,
                    side=side,
                    severity=severity,
                )
            )
    return out
