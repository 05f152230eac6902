import numpy as np
import pytest

from pedboost.pedigree import (
    AGE_NEVER,
    FEMALE,
    MALE,
    Individual,
    Pedigree,
    PhenotypeRecord,
    founders,
    nuclear_families,
    read_pedigree_csv,
    validate,
    write_pedigree_csv,
)


def test_minimal_founder_counselee_passes():
    ped = Pedigree([Individual("1", FEMALE, current_age=30)], "1")
    report = validate(ped)
    assert report.ok and report.violations == ()


def test_male_mother_fails():
    ped = Pedigree([
        Individual("kid", MALE, mother_id="dad", father_id="dad2", current_age=10),
        Individual("dad", MALE, current_age=40),
        Individual("dad2", MALE, current_age=41),
    ], "kid")
    report = validate(ped)
    assert not report.ok
    assert any("mother not female" in v for v in report.violations)


def test_single_parent_fails():
    ped = Pedigree([
        Individual("kid", MALE, mother_id="mom", father_id=None, current_age=10),
        Individual("mom", FEMALE, current_age=40),
    ], "kid")
    assert not validate(ped).ok


def test_missing_counselee_and_bad_ages():
    ped = Pedigree([Individual("1", FEMALE, current_age=0)], "2")
    report = validate(ped)
    assert not report.ok
    assert len(report.violations) == 2


def test_affected_age_consistency():
    bad = Pedigree([Individual("1", FEMALE, current_age=30,
                               phenotypes={"c": PhenotypeRecord(True, 35)})], "1")
    assert not validate(bad).ok
    unknown = Pedigree([Individual("1", FEMALE, current_age=30,
                                   phenotypes={"c": PhenotypeRecord(False, 0)})], "1")
    assert validate(unknown).ok


def test_affected_at_never_age_fails():
    ped = Pedigree([Individual("1", FEMALE, current_age=AGE_NEVER,
                               phenotypes={"c": PhenotypeRecord(True, AGE_NEVER)})], "1")
    assert not validate(ped).ok


def test_marriage_loop_rejected():
    # two full siblings having a child together
    members = [
        Individual("gm", FEMALE, current_age=80),
        Individual("gf", MALE, current_age=80),
        Individual("a", MALE, mother_id="gm", father_id="gf", current_age=50),
        Individual("b", FEMALE, mother_id="gm", father_id="gf", current_age=50),
        Individual("kid", FEMALE, mother_id="b", father_id="a", current_age=20),
    ]
    report = validate(Pedigree(members, "kid"))
    assert not report.ok
    assert any("loop" in v for v in report.violations)


def test_parent_cycle_rejected():
    members = [
        Individual("a", MALE, mother_id="b", father_id="c", current_age=50),
        Individual("b", FEMALE, mother_id="d", father_id="a", current_age=50),
        Individual("c", MALE, current_age=70),
        Individual("d", FEMALE, current_age=70),
    ]
    report = validate(Pedigree(members, "a"))
    assert not report.ok
    assert any("cycle" in v for v in report.violations)


def test_simulated_families_valid(small_families):
    assert all(validate(f.pedigree).ok for f in small_families)


def test_founders_trio(trio):
    assert [m.id for m in founders(trio)] == ["f", "m"]


def test_founders_partition(small_families):
    for fam in small_families[:50]:
        f = {m.id for m in founders(fam.pedigree)}
        non = {m.id for m in fam.pedigree if not m.is_founder}
        assert f | non == {m.id for m in fam.pedigree}
        assert not f & non


def test_nuclear_families_trio(trio):
    fams = nuclear_families(trio)
    assert len(fams) == 1
    assert fams[0].father.id == "f" and fams[0].mother.id == "m"
    assert [c.id for c in fams[0].children] == ["c"]


def test_nuclear_families_three_generations():
    members = [
        Individual("c", FEMALE, mother_id="m", father_id="f", current_age=30),
        Individual("m", FEMALE, mother_id="mgm", father_id="mgf", current_age=60),
        Individual("f", MALE, mother_id="pgm", father_id="pgf", current_age=60),
        Individual("mgm", FEMALE, current_age=85),
        Individual("mgf", MALE, current_age=85),
        Individual("pgm", FEMALE, current_age=85),
        Individual("pgf", MALE, current_age=85),
    ]
    assert len(nuclear_families(Pedigree(members, "c"))) == 3


def test_nuclear_families_cover_each_nonfounder_once(small_families):
    for fam in small_families[:50]:
        seen = [c.id for nf in nuclear_families(fam.pedigree) for c in nf.children]
        expected = sorted(m.id for m in fam.pedigree if not m.is_founder)
        assert sorted(seen) == expected


def test_member_order_does_not_matter(small_families):
    rng = np.random.default_rng(0)
    for fam in small_families[:10]:
        members = list(fam.pedigree.members)
        rng.shuffle(members)
        shuffled = Pedigree(members, fam.pedigree.counselee_id)
        assert validate(shuffled).ok == validate(fam.pedigree).ok
        assert [m.id for m in shuffled.members] == [m.id for m in fam.pedigree.members]


def test_csv_round_trip(tmp_path, small_families):
    path = tmp_path / "peds.csv"
    pedigrees = [f.pedigree for f in small_families[:20]]
    write_pedigree_csv(path, pedigrees, ["colorectal", "endometrial", "gastric"])
    back = read_pedigree_csv(path)
    assert len(back) == 20
    by_counselee = {p.counselee_id: p for p in back}
    for orig in pedigrees:
        got = by_counselee[orig.counselee_id]
        assert [m.id for m in got.members] == [m.id for m in orig.members]
        for a, b in zip(got.members, orig.members):
            assert (a.sex, a.mother_id, a.father_id, a.current_age) == \
                   (b.sex, b.mother_id, b.father_id, b.current_age)
            assert a.phenotypes == dict(b.phenotypes)


def test_csv_missing_header_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,sex\n1,F\n")
    with pytest.raises(ValueError, match="missing column"):
        read_pedigree_csv(path)


def test_csv_counselee_required_per_family(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "id,sex,mother_id,father_id,current_age,counselee\n"
        "1,F,,,40,0\n"
    )
    with pytest.raises(ValueError, match="counselee"):
        read_pedigree_csv(path)
