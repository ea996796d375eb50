import logging

import numpy as np
import pytest

from aemr import (
    GeneticMap,
    HaplotypePair,
    LengthMismatch,
    NegativeDistance,
    NonBinaryAllele,
    MissingMember,
    Trio,
    Cohort,
    UnmatchedFamily,
    load_cohort,
    load_genetic_map,
    validate_mendelian,
    write_cohort,
    write_genetic_map,
)
from aemr.errors import DataError, NonMonotoneIndex


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_map_basic(tmp_path):
    path = write(
        tmp_path / "map.tsv",
        "index\tid\tcM\n1\trs1\t-\n2\trs2\t0.5\n3\trs3\t1.2\n",
    )
    gmap = load_genetic_map(path)
    assert gmap.p == 3
    assert gmap.gap_cm(2) == 0.5
    assert gmap.gap_cm(3) == 1.2


def test_load_map_inf(tmp_path):
    lines = ["index\tid\tcM"]
    for j in range(1, 41):
        dist = "inf" if j == 37 else "1.0"
        lines.append(f"{j}\trs{j}\t{dist}")
    gmap = load_genetic_map(write(tmp_path / "map.tsv", "\n".join(lines) + "\n"))
    assert np.isinf(gmap.dist_from_prev_cm[36])
    assert gmap.gap_cm(37) == np.inf


def test_load_map_negative_distance(tmp_path):
    path = write(tmp_path / "map.tsv", "index\tid\tcM\n1\trs1\t0\n2\trs2\t-0.1\n")
    with pytest.raises(NegativeDistance):
        load_genetic_map(path)


def test_load_map_nonmonotone_index(tmp_path):
    path = write(tmp_path / "map.tsv", "index\tid\tcM\n1\trs1\t0\n3\trs3\t0.5\n")
    with pytest.raises(NonMonotoneIndex) as err:
        load_genetic_map(path)
    assert err.value.line == 3


def test_load_map_bad_header(tmp_path):
    path = write(tmp_path / "map.tsv", "idx\tid\tcM\n1\trs1\t0\n")
    with pytest.raises(DataError):
        load_genetic_map(path)


def _hap_lines(fam, rows):
    return [f"{fam}\t{member}\t{origin}\t{alleles}" for member, origin, alleles in rows]


def _complete_family(fam="f1", p=3):
    return _hap_lines(
        fam,
        [
            ("M", "m", "1" * p),
            ("M", "f", "0" * p),
            ("F", "m", "0" * p),
            ("F", "f", "1" * p),
            ("O", "m", "1" * p),
            ("O", "f", "0" * p),
        ],
    )


def _write_inputs(tmp_path, hap_lines, pheno_lines):
    hap = write(
        tmp_path / "haps.tsv", "family\tmember\torigin\talleles\n" + "\n".join(hap_lines) + "\n"
    )
    pheno = write(tmp_path / "pheno.tsv", "family\tD\tY\n" + "\n".join(pheno_lines) + "\n")
    gmap = GeneticMap(ids=("a", "b", "c"), dist_from_prev_cm=np.array([0.0, 1.0, 2.0]))
    return gmap, hap, pheno


def test_load_cohort_one_family(tmp_path):
    gmap, hap, pheno = _write_inputs(tmp_path, _complete_family(), ["f1\t0.5\t-1.25"])
    cohort = load_cohort(gmap, hap, pheno)
    assert len(cohort) == 1
    trio = cohort.trios[0]
    assert trio.exposure == 0.5 and trio.outcome == -1.25
    assert trio.offspring.maternal.tolist() == [1, 1, 1]


def test_load_cohort_length_mismatch(tmp_path):
    rows = _complete_family()
    rows[4] = "f1\tO\tm\t11"  # offspring maternal haplotype one locus short
    gmap, hap, pheno = _write_inputs(tmp_path, rows, ["f1\t0\t0"])
    with pytest.raises(LengthMismatch):
        load_cohort(gmap, hap, pheno)


def test_load_cohort_unmatched_family(tmp_path):
    gmap, hap, pheno = _write_inputs(tmp_path, _complete_family(), ["f2\t0\t0"])
    with pytest.raises(UnmatchedFamily):
        load_cohort(gmap, hap, pheno)


def test_load_cohort_missing_member(tmp_path):
    gmap, hap, pheno = _write_inputs(tmp_path, _complete_family()[:-1], ["f1\t0\t0"])
    with pytest.raises(MissingMember):
        load_cohort(gmap, hap, pheno)


def test_load_cohort_non_binary_allele(tmp_path):
    rows = _complete_family()
    rows[0] = "f1\tM\tm\t102"
    gmap, hap, pheno = _write_inputs(tmp_path, rows, ["f1\t0\t0"])
    with pytest.raises(NonBinaryAllele):
        load_cohort(gmap, hap, pheno)


def test_load_cohort_missing_phenotype_excluded(tmp_path, caplog):
    rows = _complete_family("f1") + _complete_family("f2")
    gmap, hap, pheno = _write_inputs(tmp_path, rows, ["f1\t0.1\t0.2", "f2\tNA\t0.3"])
    with caplog.at_level(logging.WARNING, logger="aemr.data"):
        cohort = load_cohort(gmap, hap, pheno)
    assert [t.family_id for t in cohort.trios] == ["f1"]
    assert any("f2" in rec.getMessage() for rec in caplog.records)


def test_roundtrip_bit_exact(tmp_path, rng):
    p = 17
    gaps = rng.uniform(0, 80, size=p)
    gaps[0] = 0.0
    gaps[5] = np.inf
    gmap = GeneticMap(ids=tuple(f"v{j}" for j in range(p)), dist_from_prev_cm=gaps)
    trios = []
    for i in range(4):
        hap = lambda: HaplotypePair(
            rng.integers(0, 2, p, dtype=np.uint8), rng.integers(0, 2, p, dtype=np.uint8)
        )
        trios.append(
            Trio(
                family_id=f"fam{i}",
                mother=hap(),
                father=hap(),
                offspring=hap(),
                exposure=float(rng.standard_normal()),
                outcome=float(rng.standard_normal()),
            )
        )
    cohort = Cohort(map=gmap, trios=trios)
    write_genetic_map(gmap, tmp_path / "map.tsv")
    write_cohort(cohort, tmp_path / "haps.tsv", tmp_path / "pheno.tsv")
    gmap2 = load_genetic_map(tmp_path / "map.tsv")
    cohort2 = load_cohort(gmap2, tmp_path / "haps.tsv", tmp_path / "pheno.tsv")
    assert np.array_equal(gmap2.dist_from_prev_cm[1:], gmap.dist_from_prev_cm[1:])
    for a, b in zip(cohort.trios, cohort2.trios):
        assert a.family_id == b.family_id
        assert a.exposure == b.exposure and a.outcome == b.outcome
        for pa, pb in (
            (a.mother, b.mother),
            (a.father, b.father),
            (a.offspring, b.offspring),
        ):
            assert np.array_equal(pa.maternal, pb.maternal)
            assert np.array_equal(pa.paternal, pb.paternal)


def _trio(mother_m, mother_f, child_m, p=1):
    ones = np.ones(p, dtype=np.uint8)
    return Trio(
        family_id="f",
        mother=HaplotypePair(np.array(mother_m, dtype=np.uint8), np.array(mother_f, dtype=np.uint8)),
        father=HaplotypePair(ones, ones),
        offspring=HaplotypePair(np.array(child_m, dtype=np.uint8), ones),
        exposure=0.0,
        outcome=0.0,
    )


def test_validate_mendelian_flags_impossible_allele():
    trio = _trio([0], [0], [1])
    violations = validate_mendelian(trio, epsilon=0.0)
    assert len(violations) == 1
    v = violations[0]
    assert v.locus == 1 and v.side == "maternal" and v.severity == "error"


def test_validate_mendelian_consistent_allele():
    trio = _trio([1], [0], [1])
    assert validate_mendelian(trio, epsilon=0.0) == []


def test_validate_mendelian_warning_with_mutation_rate():
    trio = _trio([0], [0], [1])
    violations = validate_mendelian(trio, epsilon=1e-8)
    assert len(violations) == 1
    assert violations[0].severity == "warning"


def test_duplicate_family_rejected(rng):
    gmap = GeneticMap(ids=("a",), dist_from_prev_cm=np.array([0.0]))
    one = np.ones(1, dtype=np.uint8)
    hap = HaplotypePair(one, one)
    trio = Trio("same", hap, hap, hap, 0.0, 0.0)
    with pytest.raises(DataError):
        Cohort(map=gmap, trios=[trio, trio])
