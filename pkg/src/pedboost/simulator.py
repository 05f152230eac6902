"""Family simulator: structure, current ages, genotypes, cancer histories.

Each family is built around a fixed core (counselee, parents, four
grandparents). Sibling, aunt/uncle and child counts are drawn uniformly from
a small support; spouses are added whenever someone in the pedigree has
children, so that every child has both parents present. Grandmothers anchor
the age model; everyone else gets a spouse or child age rule. Genotypes are
Hardy-Weinberg for founders and Mendelian transmission for everyone else,
and cancer onset ages are drawn from the genotype- and sex-specific annual
densities with the residual mass meaning "never".

Every family draws from its own RNG stream derived from (seed, family
index), so output is identical no matter how work is distributed.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .pedigree import AGE_NEVER, FEMALE, MALE, Individual, Pedigree, PhenotypeRecord, T_MAX
from .penetrance import (
    AlleleFrequencies,
    PenetranceTable,
    default_frequencies,
    default_tables,
    genotype_curves,
    hardy_weinberg,
    transmission,
    DEFAULT_GENES,
)


@dataclass(frozen=True)
class SimulationScenario:
    n_families: int
    tables: Mapping[str, PenetranceTable]
    freqs: AlleleFrequencies
    genes: tuple[str, ...] = DEFAULT_GENES
    rng_seed: int = 0
    count_support: tuple[int, ...] = (0, 1, 2, 3)
    grandmother_age_mean: float = 100.0
    grandmother_age_sd: float = 2.0
    spouse_age_sd: float = 2.0
    child_age_offset: float = 30.0
    child_age_sd: float = 5.0
    min_parent_child_gap: int = 15


def default_scenario(n_families: int, penetrance: str = "low", gastric_signal: str = "high",
                     rng_seed: int = 0) -> SimulationScenario:
    return SimulationScenario(
        n_families=n_families,
        tables=default_tables(penetrance, gastric_signal),
        freqs=default_frequencies(),
        rng_seed=rng_seed,
    )


# age rules: ("root",), ("spouse", partner), ("child", mother)
_ROOT = "root"
_SPOUSE = "spouse"
_CHILD = "child"


@dataclass
class FamilyDraft:
    """Mutable working state while one family is being generated."""

    sexes: list[str] = field(default_factory=list)
    fathers: list[int] = field(default_factory=list)  # -1 for founders
    mothers: list[int] = field(default_factory=list)
    age_rules: list[tuple] = field(default_factory=list)
    counselee: int = 6
    ages: np.ndarray | None = None
    genotypes: np.ndarray | None = None  # [n, n_genes] states 0/1/2
    phenotypes: list[dict[str, PhenotypeRecord]] | None = None

    def add(self, sex: str, father: int = -1, mother: int = -1, age_rule: tuple = (_ROOT,)) -> int:
        self.sexes.append(sex)
        self.fathers.append(father)
        self.mothers.append(mother)
        self.age_rules.append(age_rule)
        return len(self.sexes) - 1

    def __len__(self) -> int:
        return len(self.sexes)


@dataclass(frozen=True)
class SimulatedFamily:
    pedigree: Pedigree
    counselee_genotype: tuple[int, ...]

    @property
    def is_carrier(self) -> bool:
        return any(s >= 1 for s in self.counselee_genotype)


def sample_structure(rng: np.random.Generator,
                     count_support: Sequence[int] = (0, 1, 2, 3)) -> FamilyDraft:
    """Draw the family skeleton: members, sexes, parent links, age rules."""
    support = tuple(count_support)

    def draw_count() -> int:
        return support[rng.integers(0, len(support))]

    d = FamilyDraft()
    mgm = d.add(FEMALE)
    mgf = d.add(MALE, age_rule=(_SPOUSE, mgm))
    pgm = d.add(FEMALE)
    pgf = d.add(MALE, age_rule=(_SPOUSE, pgm))
    mother = d.add(FEMALE, father=mgf, mother=mgm, age_rule=(_CHILD, mgm))
    father = d.add(MALE, father=pgf, mother=pgm, age_rule=(_CHILD, pgm))

    counselee_sex = FEMALE if rng.random() < 0.5 else MALE
    d.add(counselee_sex, father=father, mother=mother, age_rule=(_CHILD, mother))

    n_sisters = draw_count()
    n_brothers = draw_count()
    siblings = [d.add(FEMALE, father=father, mother=mother, age_rule=(_CHILD, mother))
                for _ in range(n_sisters)]
    siblings += [d.add(MALE, father=father, mother=mother, age_rule=(_CHILD, mother))
                 for _ in range(n_brothers)]

    for _ in range(draw_count()):  # maternal aunts
        d.add(FEMALE, father=mgf, mother=mgm, age_rule=(_CHILD, mgm))
    for _ in range(draw_count()):  # maternal uncles
        d.add(MALE, father=mgf, mother=mgm, age_rule=(_CHILD, mgm))
    for _ in range(draw_count()):  # paternal aunts
        d.add(FEMALE, father=pgf, mother=pgm, age_rule=(_CHILD, pgm))
    for _ in range(draw_count()):  # paternal uncles
        d.add(MALE, father=pgf, mother=pgm, age_rule=(_CHILD, pgm))

    def add_children(parent: int, n_daughters: int, n_sons: int) -> None:
        if n_daughters + n_sons == 0:
            return
        spouse_sex = MALE if d.sexes[parent] == FEMALE else FEMALE
        spouse = d.add(spouse_sex, age_rule=(_SPOUSE, parent))
        pa, mo = (spouse, parent) if d.sexes[parent] == FEMALE else (parent, spouse)
        for _ in range(n_daughters):
            d.add(FEMALE, father=pa, mother=mo, age_rule=(_CHILD, mo))
        for _ in range(n_sons):
            d.add(MALE, father=pa, mother=mo, age_rule=(_CHILD, mo))

    add_children(d.counselee, draw_count(), draw_count())
    for sib in siblings:
        add_children(sib, draw_count(), draw_count())
    return d


@lru_cache(maxsize=None)
def _transmission_cum() -> tuple:
    # [father_state][mother_state] -> (P(child<=0), P(child<=1)) as plain floats
    return tuple(
        tuple(tuple(np.cumsum(transmission(a, b))[:2]) for b in range(3))
        for a in range(3)
    )


def assign_genotypes(draft: FamilyDraft, freqs: AlleleFrequencies,
                     genes: Sequence[str], rng: np.random.Generator) -> None:
    """Founders from Hardy-Weinberg, everyone else by transmission."""
    n = len(draft)
    hw_cum = {g: tuple(np.cumsum(hardy_weinberg(freqs.for_gene(g)))[:2]) for g in genes}
    trans_cum = _transmission_cum()
    geno = np.zeros((n, len(genes)), dtype=np.int8)
    random = rng.random
    for i in range(n):
        fa, mo = draft.fathers[i], draft.mothers[i]
        for k, g in enumerate(genes):
            u = random()
            c0, c1 = hw_cum[g] if fa < 0 else trans_cum[geno[fa, k]][geno[mo, k]]
            geno[i, k] = 0 if u < c0 else (1 if u < c1 else 2)
    draft.genotypes = geno


def assign_ages(draft: FamilyDraft, rng: np.random.Generator,
                scenario: SimulationScenario) -> None:
    """Current ages: grandmothers anchor, spouses track partners, children
    sit a generation below their mother with a minimum age gap."""
    n = len(draft)
    ages = np.zeros(n, dtype=np.int64)
    normal = rng.normal
    for i in range(n):
        rule = draft.age_rules[i]
        if rule[0] == _ROOT:
            raw = normal(scenario.grandmother_age_mean, scenario.grandmother_age_sd)
        elif rule[0] == _SPOUSE:
            raw = normal(ages[rule[1]], scenario.spouse_age_sd)
        else:
            mom = ages[rule[1]]
            raw = normal(mom - scenario.child_age_offset, scenario.child_age_sd)
            raw = min(raw, mom - scenario.min_parent_child_gap)
        ages[i] = min(max(int(math.floor(raw + 0.5)), 1), AGE_NEVER)
    draft.ages = ages


def assign_cancers(draft: FamilyDraft, tables: Mapping[str, PenetranceTable],
                   genes: Sequence[str], rng: np.random.Generator) -> None:
    """Draw per-cancer onset ages from each member's genotype curve.

    The onset age is AGE_NEVER when the event does not happen by T_MAX;
    affected means onset at or before the current age, and the observed age
    is censored at the current age.
    """
    assert draft.ages is not None and draft.genotypes is not None
    cum_tables = [(cancer, _onset_cum_lists(tables[cancer], tuple(genes)))
                  for cancer in sorted(tables)]
    masks = np.zeros(len(draft), dtype=np.int64)
    for k in range(len(genes)):
        masks |= (draft.genotypes[:, k] >= 1).astype(np.int64) << k

    random = rng.random
    phenos: list[dict[str, PhenotypeRecord]] = []
    for i in range(len(draft)):
        age = int(draft.ages[i])
        sex = draft.sexes[i]
        mask = int(masks[i])
        horizon = min(age, T_MAX)
        rec: dict[str, PhenotypeRecord] = {}
        for cancer, by_sex in cum_tables:
            if sex not in by_sex:
                rec[cancer] = PhenotypeRecord(False, age)
                continue
            onset = bisect.bisect_left(by_sex[sex][mask], random()) + 1  # AGE_NEVER past the mass
            affected = onset <= horizon
            rec[cancer] = PhenotypeRecord(affected, onset if affected else age)
        phenos.append(rec)
    draft.phenotypes = phenos


def _onset_cum_lists(table: PenetranceTable, genes: tuple) -> dict[str, list[list[float]]]:
    """Cumulative onset mass per sex and carried-gene subset, as plain lists
    (bisect on a list beats array searchsorted at this size); cached on the
    table like the curves themselves."""
    key = ("onset_cum", genes)
    cached = table._curve_cache.get(key)
    if cached is None:
        cached = {
            sex: np.cumsum(dens[:, 1:], axis=1).tolist()
            for sex, (_, dens) in genotype_curves(table, genes).items()
        }
        table._curve_cache[key] = cached
    return cached


def finish(draft: FamilyDraft, family_index: int = 0) -> SimulatedFamily:
    """Freeze a fully assigned draft into a Pedigree."""
    assert draft.ages is not None and draft.genotypes is not None and draft.phenotypes is not None
    ids = [f"{family_index}-{i + 1:02d}" for i in range(len(draft))]
    members = [
        Individual(
            id=ids[i],
            sex=draft.sexes[i],
            mother_id=ids[draft.mothers[i]] if draft.mothers[i] >= 0 else None,
            father_id=ids[draft.fathers[i]] if draft.fathers[i] >= 0 else None,
            current_age=int(draft.ages[i]),
            phenotypes=draft.phenotypes[i],
        )
        for i in range(len(draft))
    ]
    return SimulatedFamily(
        pedigree=Pedigree(members, ids[draft.counselee]),
        counselee_genotype=tuple(int(s) for s in draft.genotypes[draft.counselee]),
    )


def family_rng(seed: int, family_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, family_index)))


def simulate_family(scenario: SimulationScenario, family_index: int) -> SimulatedFamily:
    rng = family_rng(scenario.rng_seed, family_index)
    draft = sample_structure(rng, scenario.count_support)
    assign_genotypes(draft, scenario.freqs, scenario.genes, rng)
    assign_ages(draft, rng, scenario)
    assign_cancers(draft, scenario.tables, scenario.genes, rng)
    return finish(draft, family_index)


def simulate(scenario: SimulationScenario) -> list[SimulatedFamily]:
    return [simulate_family(scenario, i) for i in range(scenario.n_families)]
