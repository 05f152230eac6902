import time

import numpy as np
import pytest

from pedboost.mendelian import (
    BRUTEFORCE_LIMIT,
    MendelianModel,
    PedigreeLoopError,
    carrier_posterior_bruteforce,
    carrier_posterior_peeling,
)
from pedboost.oracle import oracle_check, random_pedigree, random_tables
from pedboost.pedigree import FEMALE, MALE, Individual, Pedigree, PhenotypeRecord
from pedboost.penetrance import (
    AlleleFrequencies,
    PenetranceTable,
    default_frequencies,
    default_tables,
    DEFAULT_GENES,
    weibull_density,
)
from pedboost.simulator import default_scenario, simulate

# brute-force posterior for this trio, frozen as a regression fixture
TRIO_POSTERIOR = (0.10488205208922577, 0.8842670645960066, 0.010850883314767653)
TRIO_CARRIER = 0.8951179479107743


@pytest.fixture(scope="module")
def engine(single_gene_tables, single_gene_freqs):
    return MendelianModel(single_gene_tables, single_gene_freqs, ("geneX",))


def test_counselee_only_posterior_is_prevalence(engine):
    solo = Pedigree([Individual("1", FEMALE, current_age=40)], "1")
    post = engine.posterior_peeling(solo)
    assert np.allclose(post.probabilities, engine.prior, atol=1e-14)
    assert np.isclose(post.carrier_probability, 1 - engine.prior[0])


def test_bayes_factor_of_ten():
    f_non = np.zeros(94)
    f_non[39] = 0.03
    f_car = np.zeros(94)
    f_car[39] = 0.30
    table = PenetranceTable("c", {
        (FEMALE, "noncarrier"): f_non, (MALE, "noncarrier"): f_non,
        (FEMALE, "g"): f_car, (MALE, "g"): f_car,
    })
    eng = MendelianModel({"c": table}, AlleleFrequencies({"g": 0.01}), ("g",))
    solo = Pedigree([Individual("x", MALE, current_age=40,
                                phenotypes={"c": PhenotypeRecord(True, 40)})], "x")
    post = eng.posterior_bruteforce(solo)
    prior_odds = (1 - eng.prior[0]) / eng.prior[0]
    post_odds = post.carrier_probability / (1 - post.carrier_probability)
    assert np.isclose(post_odds / prior_odds, 10.0, rtol=1e-10)


def test_trio_regression_fixture(engine, trio):
    post = engine.posterior_bruteforce(trio)
    assert np.allclose(post.probabilities, TRIO_POSTERIOR, atol=1e-12)
    assert np.isclose(post.carrier_probability, TRIO_CARRIER, atol=1e-12)


def test_trio_peeling_matches_bruteforce(engine, trio):
    peeled = engine.posterior_peeling(trio)
    assert np.abs(peeled.probabilities - np.array(TRIO_POSTERIOR)).max() < 1e-10


def test_spec_wrappers(single_gene_tables, single_gene_freqs, trio):
    a = carrier_posterior_bruteforce(trio, single_gene_tables, single_gene_freqs, ("geneX",))
    b = carrier_posterior_peeling(trio, single_gene_tables, single_gene_freqs, ("geneX",))
    assert np.abs(a.probabilities - b.probabilities).max() < 1e-10


def test_phenotype_likelihood_no_information(engine):
    person = Individual("1", FEMALE, current_age=50,
                        phenotypes={"cancer_a": PhenotypeRecord(False, 0)})
    for g in (0, 1, 2):
        assert engine.phenotype_likelihood(person, (g,)) == 1.0


def test_phenotype_likelihood_single_factors(engine, single_gene_tables):
    table = single_gene_tables["cancer_a"]
    unaff = Individual("1", FEMALE, current_age=60,
                       phenotypes={"cancer_a": PhenotypeRecord(False, 60)})
    assert np.isclose(engine.phenotype_likelihood(unaff, (0,)),
                      table.survival(FEMALE, "noncarrier")[60])
    aff = Individual("2", MALE, current_age=55,
                     phenotypes={"cancer_a": PhenotypeRecord(True, 50)})
    assert np.isclose(engine.phenotype_likelihood(aff, (1,)),
                      table.density(MALE, "geneX")[49])


def test_phenotype_likelihood_product_and_sex_exclusion():
    tables = default_tables("low")
    eng = MendelianModel(tables, default_frequencies(), DEFAULT_GENES)
    male = Individual("1", MALE, current_age=60, phenotypes={
        "colorectal": PhenotypeRecord(True, 50),
        "endometrial": PhenotypeRecord(False, 60),  # excluded sex: factor 1
        "gastric": PhenotypeRecord(False, 60),
    })
    expected = (tables["colorectal"].density(MALE, "noncarrier")[49]
                * tables["gastric"].survival(MALE, "noncarrier")[60])
    assert np.isclose(eng.phenotype_likelihood(male, (0, 0, 0)), expected, rtol=1e-12)


def test_bruteforce_guard():
    tables = default_tables("low")
    eng = MendelianModel(tables, default_frequencies(), DEFAULT_GENES)
    members = [Individual(str(i), FEMALE, current_age=40) for i in range(5)]
    ped = Pedigree(members, "0")
    assert 5 * 3 > BRUTEFORCE_LIMIT
    with pytest.raises(ValueError, match="brute force"):
        eng.posterior_bruteforce(ped)


def test_peeling_rejects_marriage_loop(engine):
    members = [
        Individual("gm", FEMALE, current_age=80),
        Individual("gf", MALE, current_age=80),
        Individual("a", MALE, mother_id="gm", father_id="gf", current_age=50),
        Individual("b", FEMALE, mother_id="gm", father_id="gf", current_age=50),
        Individual("kid", FEMALE, mother_id="b", father_id="a", current_age=20),
    ]
    with pytest.raises(PedigreeLoopError):
        engine.posterior_peeling(Pedigree(members, "kid"))


def test_zero_likelihood_raises():
    f = np.zeros(94)
    f[10] = 0.2
    table = PenetranceTable("c", {(FEMALE, "noncarrier"): f, (FEMALE, "g"): f,
                                  (MALE, "noncarrier"): f, (MALE, "g"): f})
    eng = MendelianModel({"c": table}, AlleleFrequencies({"g": 0.01}), ("g",))
    impossible = Pedigree([Individual("1", FEMALE, current_age=50,
                                      phenotypes={"c": PhenotypeRecord(True, 30)})], "1")
    with pytest.raises(ValueError, match="zero"):
        eng.posterior_peeling(impossible)


def test_oracle_equivalence_small():
    result = oracle_check(n_cases=40, seed=77)
    assert result.ok, result
    assert result.max_abs_diff < 1e-10


def test_large_family_three_genes_fast():
    tables = default_tables("low")
    eng = MendelianModel(tables, default_frequencies(), DEFAULT_GENES)
    fams = simulate(default_scenario(40, "low", rng_seed=3))
    big = max(fams, key=lambda f: len(f.pedigree)).pedigree
    assert len(big) >= 30
    t0 = time.perf_counter()
    post = eng.posterior_peeling(big)
    elapsed = time.perf_counter() - t0
    assert elapsed < 0.05
    assert np.isclose(post.probabilities.sum(), 1.0, atol=1e-10)
    assert np.all(post.probabilities >= 0) and np.all(post.probabilities <= 1)


def test_permutation_and_relabeling_invariance(engine, trio):
    base = engine.posterior_peeling(trio).probabilities
    relabeled = Pedigree([
        Individual("zz-kid", FEMALE, mother_id="aa-mom", father_id="mm-dad", current_age=45,
                   phenotypes={"cancer_a": PhenotypeRecord(True, 38)}),
        Individual("aa-mom", FEMALE, current_age=74,
                   phenotypes={"cancer_a": PhenotypeRecord(True, 52)}),
        Individual("mm-dad", MALE, current_age=77,
                   phenotypes={"cancer_a": PhenotypeRecord(False, 77)}),
    ], "zz-kid")
    assert np.abs(engine.posterior_peeling(relabeled).probabilities - base).max() < 1e-12


def test_affected_relative_never_decreases_carrier_probability():
    """Adding a first-degree relative affected at the modal carrier age."""
    tables = default_tables("low")
    genes = DEFAULT_GENES
    freqs = default_frequencies()
    eng = MendelianModel(tables, freqs, genes)
    modal_age = int(np.argmax(tables["colorectal"].density(FEMALE, "MLH1"))) + 1
    rng = np.random.default_rng(4)
    fams = simulate(default_scenario(100, "low", rng_seed=21))
    for fam in fams:
        ped = fam.pedigree
        base = eng.carrier_probability(ped)
        new_id = "zz-extra-sib"
        counselee = ped.counselee
        if counselee.is_founder:
            continue
        sib = Individual(new_id, FEMALE, mother_id=counselee.mother_id,
                         father_id=counselee.father_id,
                         current_age=max(modal_age, 1),
                         phenotypes={"colorectal": PhenotypeRecord(True, modal_age)})
        bigger = Pedigree(list(ped.members) + [sib], ped.counselee_id)
        assert eng.carrier_probability(bigger) >= base - 1e-12


def test_score_matches_individual_calls(small_families):
    tables = default_tables("low")
    eng = MendelianModel(tables, default_frequencies(), DEFAULT_GENES)
    peds = [f.pedigree for f in small_families[:40]]
    batch = eng.score(peds)
    single = np.array([eng.carrier_probability(p) for p in peds])
    assert np.abs(batch - single).max() == 0.0


def test_calibration_in_expectation():
    tables = default_tables("low")
    eng = MendelianModel(tables, default_frequencies(), DEFAULT_GENES)
    fams = simulate(default_scenario(2000, "low", rng_seed=100))
    probs = eng.score([f.pedigree for f in fams])
    y = np.array([f.is_carrier for f in fams], dtype=float)
    oe = y.sum() / probs.sum()
    assert 0.9 <= oe <= 1.1
