import numpy as np
import pytest

from pedboost.pedigree import FEMALE, MALE, Individual, Pedigree, PhenotypeRecord
from pedboost.penetrance import AlleleFrequencies, PenetranceTable, weibull_density


@pytest.fixture(scope="session")
def single_gene_tables():
    """One cancer, one gene, both sexes; fixed shapes used across tests."""
    noncar = weibull_density(70, 5.0, 0.05)
    car = weibull_density(50, 4.0, 0.40)
    return {
        "cancer_a": PenetranceTable("cancer_a", {
            (FEMALE, "noncarrier"): noncar, (MALE, "noncarrier"): noncar,
            (FEMALE, "geneX"): car, (MALE, "geneX"): car,
        })
    }


@pytest.fixture(scope="session")
def single_gene_freqs():
    return AlleleFrequencies({"geneX": 0.02})


@pytest.fixture
def trio():
    return Pedigree([
        Individual("c", FEMALE, mother_id="m", father_id="f", current_age=45,
                   phenotypes={"cancer_a": PhenotypeRecord(True, 38)}),
        Individual("m", FEMALE, current_age=74,
                   phenotypes={"cancer_a": PhenotypeRecord(True, 52)}),
        Individual("f", MALE, current_age=77,
                   phenotypes={"cancer_a": PhenotypeRecord(False, 77)}),
    ], "c")


def make_individual(idx, sex=FEMALE, mother=None, father=None, age=40, phenos=None):
    return Individual(str(idx), sex, mother_id=mother, father_id=father,
                      current_age=age, phenotypes=phenos or {})


@pytest.fixture(scope="session")
def small_families():
    """A few hundred simulated families shared by read-only tests."""
    from pedboost.simulator import default_scenario, simulate

    return simulate(default_scenario(300, "low", rng_seed=42))
