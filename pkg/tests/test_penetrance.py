import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedboost.pedigree import FEMALE, MALE, T_MAX
from pedboost.penetrance import (
    AlleleFrequencies,
    GenotypeSpace,
    PenetranceTable,
    all_genotypes,
    combined_survival,
    default_tables,
    density_from_survival,
    genotype_curves,
    hardy_weinberg,
    misspecify,
    prevalence,
    read_penetrance_csv,
    scale_to_lifetime_risk,
    survival_from_density,
    transmission,
    weibull_density,
    write_penetrance_csv,
)


def test_hardy_weinberg_point_values():
    p = hardy_weinberg(0.01)
    assert np.isclose(p[1], 0.0198) and np.isclose(p[2], 0.0001)
    assert np.isclose(1 - p[0], 0.0199)


def test_carrier_probability_low_frequency():
    # the order of magnitude used for real mismatch-repair genes
    p = hardy_weinberg(0.0004)
    assert np.isclose(1 - p[0], 0.00079984)


def test_prevalence_three_genes_noncarrier_mass():
    space = GenotypeSpace(("a", "b", "c"))
    prior = prevalence(AlleleFrequencies({g: 0.01 for g in space.genes}), space)
    assert np.isclose(prior[0], 0.9801**3)
    assert prior.shape == (27,)


@given(st.lists(st.floats(1e-6, 0.999), min_size=1, max_size=4))
def test_prevalence_sums_to_one(qs):
    genes = tuple(f"g{i}" for i in range(len(qs)))
    prior = prevalence(AlleleFrequencies(dict(zip(genes, qs))), GenotypeSpace(genes))
    assert abs(prior.sum() - 1.0) < 1e-12


def test_allele_frequency_bounds():
    with pytest.raises(ValueError):
        AlleleFrequencies({"g": 0.0})
    with pytest.raises(ValueError):
        AlleleFrequencies({"g": 1.0})


def test_transmission_point_values():
    assert np.allclose(transmission(1, 0), [0.5, 0.5, 0.0])
    assert np.allclose(transmission(1, 1), [0.25, 0.5, 0.25])
    assert np.allclose(transmission(2, 2), [0.0, 0.0, 1.0])


def test_transmission_matches_gamete_enumeration():
    # enumerate the four parental allele transmissions directly
    def alleles(state):
        return {0: [0, 0], 1: [0, 1], 2: [1, 1]}[state]

    for a, b in itertools.product(range(3), repeat=2):
        counts = np.zeros(3)
        for ga, gb in itertools.product(alleles(a), alleles(b)):
            counts[ga + gb] += 0.25
        assert np.allclose(transmission(a, b), counts)
        assert abs(transmission(a, b).sum() - 1.0) < 1e-12


def test_genotype_space_round_trip():
    space = GenotypeSpace(("a", "b", "c"))
    for idx, states in all_genotypes(space):
        assert space.index(states) == idx
    assert space.carried_genes(0) == ()
    assert space.carried_genes(space.index((0, 2, 1))) == ("b", "c")


def test_combined_survival_cases(single_gene_tables):
    table = single_gene_tables["cancer_a"]
    s_non = combined_survival(table, (0,), ("geneX",), FEMALE)
    assert np.allclose(s_non, table.survival(FEMALE, "noncarrier"))
    s_car = combined_survival(table, (1,), ("geneX",), FEMALE)
    assert np.allclose(s_car, table.survival(FEMALE, "geneX"))
    # heterozygous and homozygous are penetrance-equivalent
    assert np.allclose(combined_survival(table, (2,), ("geneX",), FEMALE), s_car)


def test_combined_survival_two_genes_is_product():
    f1 = weibull_density(50, 4.0, 0.3)
    f2 = weibull_density(60, 5.0, 0.2)
    table = PenetranceTable("c", {
        (FEMALE, "noncarrier"): weibull_density(70, 5.0, 0.05),
        (FEMALE, "g1"): f1, (FEMALE, "g2"): f2,
    })
    both = combined_survival(table, (1, 1), ("g1", "g2"), FEMALE)
    expected = survival_from_density(f1) * survival_from_density(f2)
    assert np.allclose(both, expected)
    # symmetric in the carried set
    assert np.allclose(combined_survival(table, (2, 1), ("g1", "g2"), FEMALE), both)


def test_combined_survival_missing_gene_entry():
    table = PenetranceTable("c", {(FEMALE, "noncarrier"): weibull_density(70, 5.0, 0.05)})
    with pytest.raises(KeyError, match="carrier_key='g1'"):
        combined_survival(table, (1,), ("g1",), FEMALE)


def test_misspecify_identity_and_single_age():
    f = np.zeros(T_MAX)
    f[0] = 0.1
    table = PenetranceTable("c", {(FEMALE, "noncarrier"): f})
    assert misspecify(table, 1.0) is table
    out = misspecify(table, 0.5).density(FEMALE, "noncarrier")
    assert np.isclose(out[0], 1 - np.sqrt(0.9))
    assert np.isclose(out[0], 0.051317, atol=1e-6)


def test_misspecify_round_trip(single_gene_tables):
    table = single_gene_tables["cancer_a"]
    back = misspecify(misspecify(table, 0.5), 2.0)
    for key, f in table.densities.items():
        assert np.abs(back.densities[key] - f).max() < 1e-12


@settings(max_examples=30)
@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_misspecify_composes_multiplicatively(a, b):
    table = PenetranceTable("c", {(MALE, "noncarrier"): weibull_density(60, 4.0, 0.4)})
    lhs = misspecify(misspecify(table, a), b).density(MALE, "noncarrier")
    rhs = misspecify(table, a * b).density(MALE, "noncarrier")
    assert np.abs(lhs - rhs).max() < 1e-12


def test_misspecify_small_exponent_lowers_early_density():
    # S**c with c < 1 inflates survival, so the first-age density shrinks
    table = PenetranceTable("c", {(MALE, "noncarrier"): weibull_density(60, 4.0, 0.4)})
    orig = table.density(MALE, "noncarrier")
    low = misspecify(table, 0.5).density(MALE, "noncarrier")
    first = np.nonzero(orig > 0)[0][0]
    assert low[first] < orig[first]
    assert low.sum() < orig.sum()


def test_misspecify_rejects_nonpositive_exponent(single_gene_tables):
    with pytest.raises(ValueError):
        misspecify(single_gene_tables["cancer_a"], 0.0)


def test_scale_to_lifetime_risk():
    f = weibull_density(60, 4.0, 0.4)
    half = scale_to_lifetime_risk(f, 0.2)
    assert np.allclose(half, f * 0.5)
    assert np.isclose(half.sum(), 0.2)
    assert np.allclose(scale_to_lifetime_risk(f, 0.4), f)
    uniform = np.full(T_MAX, 0.5 / T_MAX)
    assert np.allclose(scale_to_lifetime_risk(uniform, 0.05), np.full(T_MAX, 0.05 / T_MAX))
    with pytest.raises(ValueError):
        scale_to_lifetime_risk(np.zeros(T_MAX), 0.2)


def test_survival_density_inverses():
    f = weibull_density(55, 4.5, 0.3)
    s = survival_from_density(f)
    assert s[0] == 1.0
    assert np.all(np.diff(s) <= 0)
    assert np.allclose(density_from_survival(s), f)


def test_table_invariants_enforced():
    with pytest.raises(ValueError, match="sum to at most 1"):
        PenetranceTable("c", {(FEMALE, "noncarrier"): np.full(T_MAX, 0.05)})
    with pytest.raises(ValueError, match="ages 1"):
        PenetranceTable("c", {(FEMALE, "noncarrier"): np.zeros(10)})


def test_default_tables_lifetime_risks():
    low = default_tables("low")
    assert np.isclose(low["colorectal"].lifetime_risk(FEMALE, "MLH1"), 0.2)
    assert np.isclose(low["endometrial"].lifetime_risk(FEMALE, "MSH2"), 0.2)
    assert np.isclose(low["gastric"].lifetime_risk(MALE, "noncarrier"), 0.05)
    assert np.isclose(low["gastric"].lifetime_risk(MALE, "MLH1"), 0.5)
    high = default_tables("high")
    assert high["colorectal"].lifetime_risk(MALE, "MLH1") > 0.4
    assert low["endometrial"].sex_specific == FEMALE

    weak = default_tables("high", gastric_signal="low")["gastric"]
    noncar = weak.density(FEMALE, "noncarrier")
    assert np.allclose(weak.density(FEMALE, "MSH6"), 2.0 * noncar)
    assert np.isclose(noncar.sum(), 0.01)


def test_genotype_curves_shapes(single_gene_tables):
    curves = genotype_curves(single_gene_tables["cancer_a"], ("geneX",))
    surv, dens = curves[FEMALE]
    assert surv.shape == (2, T_MAX + 1) and dens.shape == (2, T_MAX + 1)
    assert surv[0, 0] == 1.0 and dens[0, 0] == 1.0
    assert np.allclose(dens[1, 1:], single_gene_tables["cancer_a"].density(FEMALE, "geneX"))


def test_penetrance_csv_round_trip(tmp_path):
    tables = default_tables("low")
    path = tmp_path / "pen.csv"
    write_penetrance_csv(path, tables)
    back = read_penetrance_csv(path)
    assert set(back) == set(tables)
    for cancer, table in tables.items():
        assert back[cancer].sex_specific == table.sex_specific
        for key, f in table.densities.items():
            assert np.abs(back[cancer].densities[key] - f).max() == 0.0


def test_penetrance_csv_rejects_gaps(tmp_path):
    path = tmp_path / "pen.csv"
    path.write_text("cancer,sex,carrier_key,age,density\nc,F,noncarrier,1,0.1\n")
    with pytest.raises(ValueError, match="contiguously"):
        read_penetrance_csv(path)
