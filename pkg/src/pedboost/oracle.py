"""Randomized cross-check of the peeling engine against exhaustive enumeration.

Small random pedigrees with random penetrance tables are scored by both
evaluators; any disagreement in any genotype's posterior is a failure. Used
by the test suite and exposed through the CLI as `oracle-check`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mendelian import MendelianModel
from .pedigree import FEMALE, MALE, T_MAX, Individual, Pedigree, PhenotypeRecord
from .penetrance import AlleleFrequencies, PenetranceTable, weibull_density


def random_tables(rng: np.random.Generator, genes: tuple[str, ...],
                  cancers: tuple[str, ...] = ("cancer_a", "cancer_b")) -> dict[str, PenetranceTable]:
    tables = {}
    for cancer in cancers:
        densities = {}
        for sex in (FEMALE, MALE):
            noncar = weibull_density(rng.uniform(50, 80), rng.uniform(3, 6), rng.uniform(0.01, 0.1))
            densities[(sex, "noncarrier")] = noncar
            for g in genes:
                densities[(sex, g)] = weibull_density(
                    rng.uniform(40, 70), rng.uniform(3, 6), rng.uniform(0.2, 0.6)
                )
        tables[cancer] = PenetranceTable(cancer, densities)
    return tables


def random_pedigree(rng: np.random.Generator, max_members: int = 5,
                    cancers: tuple[str, ...] = ("cancer_a", "cancer_b")) -> Pedigree:
    """Random loop-free pedigree grown by adding parent pairs or children."""
    sexes = {"0": FEMALE if rng.random() < 0.5 else MALE}
    parents: dict[str, tuple[str, str] | None] = {"0": None}
    couples: list[tuple[str, str]] = []
    target = int(rng.integers(1, max_members + 1))

    while len(sexes) < target:
        if couples and rng.random() < 0.4:
            fa, mo = couples[int(rng.integers(0, len(couples)))]
            child = str(len(sexes))
            sexes[child] = FEMALE if rng.random() < 0.5 else MALE
            parents[child] = (fa, mo)
        else:
            orphans = [m for m, p in parents.items() if p is None]
            if len(sexes) + 2 > max_members:
                break
            kid = orphans[int(rng.integers(0, len(orphans)))]
            fa, mo = str(len(sexes)), str(len(sexes) + 1)
            sexes[fa], sexes[mo] = MALE, FEMALE
            parents[fa] = parents[mo] = None
            parents[kid] = (fa, mo)
            couples.append((fa, mo))

    members = []
    for mid, sex in sexes.items():
        age = int(rng.integers(20, T_MAX + 2))
        phenos = {}
        for cancer in cancers:
            u = rng.random()
            if u < 0.3:
                phenos[cancer] = PhenotypeRecord(False, 0)  # unknown
            elif u < 0.6:
                onset = int(rng.integers(1, age + 1))
                if onset <= T_MAX:
                    phenos[cancer] = PhenotypeRecord(True, onset)
                else:
                    phenos[cancer] = PhenotypeRecord(False, age)
            else:
                phenos[cancer] = PhenotypeRecord(False, age)
        pa = parents[mid]
        members.append(Individual(
            id=mid, sex=sex,
            father_id=pa[0] if pa else None,
            mother_id=pa[1] if pa else None,
            current_age=age, phenotypes=phenos,
        ))
    counselee = str(int(rng.integers(0, len(members))))
    return Pedigree(members, counselee)


@dataclass(frozen=True)
class OracleCheckResult:
    cases: int
    max_abs_diff: float
    failures: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def oracle_check(n_cases: int = 200, seed: int = 20240, max_members: int = 5,
                 n_genes: int = 2, tol: float = 1e-10) -> OracleCheckResult:
    """Compare peeling and brute force on random pedigrees, genotype by genotype."""
    genes = tuple(f"gene{k}" for k in range(n_genes))
    worst = 0.0
    failures = []
    for case in range(n_cases):
        rng = np.random.default_rng(np.random.SeedSequence((seed, case)))
        tables = random_tables(rng, genes)
        freqs = AlleleFrequencies({g: rng.uniform(0.001, 0.2) for g in genes})
        engine = MendelianModel(tables, freqs, genes)
        ped = random_pedigree(rng, max_members)
        exact = engine.posterior_bruteforce(ped).probabilities
        peeled = engine.posterior_peeling(ped).probabilities
        diff = float(np.abs(exact - peeled).max())
        worst = max(worst, diff)
        if not diff < tol:
            failures.append(case)
    return OracleCheckResult(n_cases, worst, tuple(failures))
