"""Penetrance tables, genotype algebra, and penetrance transforms.

A penetrance table holds, for one cancer, annual event densities f(t) over
ages t = 1..T_MAX keyed by (sex, carrier_key), where carrier_key is either
"noncarrier" or a gene id. Carriers of several genes get the product of the
single-gene survival curves (dominant model: zygosity never changes the
penetrance, only transmission).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .pedigree import FEMALE, MALE, T_MAX

NONCARRIER = "noncarrier"

DEFAULT_GENES = ("MLH1", "MSH2", "MSH6")
DEFAULT_ALLELE_FREQUENCY = 0.01

COLORECTAL = "colorectal"
ENDOMETRIAL = "endometrial"
GASTRIC = "gastric"
DEFAULT_CANCERS = (COLORECTAL, ENDOMETRIAL, GASTRIC)


@dataclass(frozen=True)
class GenotypeSpace:
    """Joint ternary genotypes over an ordered gene list.

    State k of gene g is 0 (noncarrier), 1 (heterozygous) or 2 (homozygous);
    a joint genotype is encoded as a base-3 integer with gene 0 least
    significant, so index 0 is the all-noncarrier genotype.
    """

    genes: tuple[str, ...]

    @property
    def n_genes(self) -> int:
        return len(self.genes)

    @property
    def n_genotypes(self) -> int:
        return 3 ** len(self.genes)

    def index(self, states: Sequence[int]) -> int:
        return sum(s * 3**k for k, s in enumerate(states))

    def states(self, index: int) -> tuple[int, ...]:
        out = []
        for _ in self.genes:
            out.append(index % 3)
            index //= 3
        return tuple(out)

    def carried_genes(self, index: int) -> tuple[str, ...]:
        return tuple(g for g, s in zip(self.genes, self.states(index)) if s >= 1)

    def carrier_mask(self) -> np.ndarray:
        """Bitmask of carried genes for every genotype index (gene k -> bit k)."""
        masks = np.zeros(self.n_genotypes, dtype=np.int64)
        for idx in range(self.n_genotypes):
            for k, s in enumerate(self.states(idx)):
                if s >= 1:
                    masks[idx] |= 1 << k
        return masks


@dataclass(frozen=True)
class AlleleFrequencies:
    freq: Mapping[str, float]

    def __post_init__(self):
        for gene, q in self.freq.items():
            if not 0.0 < q < 1.0:
                raise ValueError(f"allele frequency for {gene} must be in (0, 1), got {q}")

    def for_gene(self, gene: str) -> float:
        return self.freq[gene]


def hardy_weinberg(q: float) -> np.ndarray:
    """Genotype prior (noncarrier, het, hom) for mutated-allele frequency q."""
    return np.array([(1 - q) ** 2, 2 * q * (1 - q), q**2])


def prevalence(freqs: AlleleFrequencies, space: GenotypeSpace) -> np.ndarray:
    """Joint genotype prior: independent Hardy-Weinberg across genes."""
    out = np.ones(1)
    for gene in space.genes:
        out = np.kron(hardy_weinberg(freqs.for_gene(gene)), out)
    return out


def transmission(parent_a_state: int, parent_b_state: int) -> np.ndarray:
    """Child state distribution for one autosomal gene given parent states."""
    return _single_gene_transmission()[parent_a_state, parent_b_state]


@lru_cache(maxsize=None)
def _single_gene_transmission() -> np.ndarray:
    # P(transmit mutated allele | state): 0, 1/2, 1
    give = np.array([0.0, 0.5, 1.0])
    t = np.zeros((3, 3, 3))
    for a in range(3):
        for b in range(3):
            pa, pb = give[a], give[b]
            t[a, b, 0] = (1 - pa) * (1 - pb)
            t[a, b, 1] = pa * (1 - pb) + (1 - pa) * pb
            t[a, b, 2] = pa * pb
    return t


@lru_cache(maxsize=8)
def transmission_tensor(n_genes: int) -> np.ndarray:
    """Joint child-given-parents tensor [S, S, S] with S = 3**n_genes."""
    single = _single_gene_transmission()
    joint = np.ones((1, 1, 1))
    for _ in range(n_genes):
        joint = np.einsum("abc,ijk->aibjck", single, joint).reshape(
            3 * joint.shape[0], 3 * joint.shape[1], 3 * joint.shape[2]
        )
    return joint


class PenetranceTable:
    """Annual event densities for one cancer, keyed by (sex, carrier_key)."""

    def __init__(self, cancer_id: str, densities: Mapping[tuple[str, str], np.ndarray],
                 sex_specific: str | None = None):
        self.cancer_id = cancer_id
        self.sex_specific = sex_specific
        self.densities = {}
        self._curve_cache: dict[tuple, dict] = {}
        for (sex, key), f in densities.items():
            f = np.asarray(f, dtype=float)
            if f.shape != (T_MAX,):
                raise ValueError(f"{cancer_id}/{sex}/{key}: density must cover ages 1..{T_MAX}")
            if np.any(f < 0) or f.sum() > 1 + 1e-9:
                raise ValueError(f"{cancer_id}/{sex}/{key}: density must be nonnegative and sum to at most 1")
            if sex_specific is not None and sex != sex_specific:
                raise ValueError(f"{cancer_id} is restricted to sex {sex_specific!r}")
            self.densities[(sex, key)] = f

    def applies_to(self, sex: str) -> bool:
        return self.sex_specific is None or self.sex_specific == sex

    def density(self, sex: str, carrier_key: str) -> np.ndarray:
        try:
            return self.densities[(sex, carrier_key)]
        except KeyError:
            raise KeyError(f"no {self.cancer_id} density for sex={sex!r}, carrier_key={carrier_key!r}") from None

    def survival(self, sex: str, carrier_key: str) -> np.ndarray:
        """S(t) = P(T > t) for t = 0..T_MAX; S(0) = 1."""
        return survival_from_density(self.density(sex, carrier_key))

    def lifetime_risk(self, sex: str, carrier_key: str) -> float:
        return float(self.density(sex, carrier_key).sum())

    def carrier_keys(self, sex: str) -> list[str]:
        return sorted(k for s, k in self.densities if s == sex)


def survival_from_density(f: np.ndarray) -> np.ndarray:
    s = np.empty(T_MAX + 1)
    s[0] = 1.0
    s[1:] = 1.0 - np.cumsum(f)
    return s


def density_from_survival(s: np.ndarray) -> np.ndarray:
    return -np.diff(s)


def combined_survival(table: PenetranceTable, genotype_states: Sequence[int],
                      genes: Sequence[str], sex: str) -> np.ndarray:
    """Survival for a joint genotype: product over carried genes' curves.

    An empty carried set gives the noncarrier curve; heterozygous and
    homozygous states are equivalent here.
    """
    carried = [g for g, s in zip(genes, genotype_states) if s >= 1]
    if not carried:
        return table.survival(sex, NONCARRIER)
    out = np.ones(T_MAX + 1)
    for g in carried:
        out = out * table.survival(sex, g)
    return out


def misspecify(table: PenetranceTable, exponent: float) -> PenetranceTable:
    """Replace every survival curve S(t) by S(t)**exponent."""
    if exponent <= 0:
        raise ValueError("exponent must be positive")
    if exponent == 1.0:
        return table
    out = {}
    for (sex, key), f in table.densities.items():
        s = survival_from_density(f) ** exponent
        out[(sex, key)] = density_from_survival(s)
    return PenetranceTable(table.cancer_id, out, table.sex_specific)


def scale_to_lifetime_risk(f: np.ndarray, target: float) -> np.ndarray:
    """Rescale a density so it sums to the target lifetime risk."""
    total = float(np.sum(f))
    if total <= 0:
        raise ValueError("cannot scale an all-zero density")
    if not 0 < target <= 1:
        raise ValueError("target lifetime risk must be in (0, 1]")
    return np.asarray(f, dtype=float) * (target / total)


def scale_table(table: PenetranceTable, targets: Mapping[str, float]) -> PenetranceTable:
    """Rescale every carrier_key named in targets (all sexes) to its target."""
    out = {}
    for (sex, key), f in table.densities.items():
        out[(sex, key)] = scale_to_lifetime_risk(f, targets[key]) if key in targets else f
    return PenetranceTable(table.cancer_id, out, table.sex_specific)


# -- stand-in data-generating tables ----------------------------------------
#
# Discrete Weibull-shaped annual densities parameterized by modal age, shape
# and lifetime risk. Not estimates of anything: a configurable placeholder
# with realistic onset curves, replaceable by CSV tables.


def weibull_density(modal_age: float, shape: float, lifetime_risk: float) -> np.ndarray:
    if modal_age <= 1 or shape <= 1:
        raise ValueError("need modal_age > 1 and shape > 1")
    scale = modal_age / ((shape - 1) / shape) ** (1 / shape)
    t = np.arange(1, T_MAX + 1, dtype=float)
    w = (t / scale) ** (shape - 1) * np.exp(-((t / scale) ** shape))
    return scale_to_lifetime_risk(w, lifetime_risk)


_STANDIN_SHAPES = {
    # cancer: (noncarrier modal age, shape), (carrier modal age, shape)
    COLORECTAL: ((70.0, 5.5), (48.0, 4.0)),
    ENDOMETRIAL: ((62.0, 5.5), (50.0, 4.0)),
    GASTRIC: ((68.0, 5.5), (55.0, 4.0)),
}

_STANDIN_NONCARRIER_RISK = {COLORECTAL: 0.025, ENDOMETRIAL: 0.012, GASTRIC: 0.05}
_STANDIN_CARRIER_RISK_HIGH = {COLORECTAL: 0.45, ENDOMETRIAL: 0.35, GASTRIC: 0.5}
_STANDIN_CARRIER_RISK_LOW = {COLORECTAL: 0.2, ENDOMETRIAL: 0.2}
_GASTRIC_LOW_NONCARRIER_RISK = 0.01


def _standin_table(cancer: str, noncar_risk: float, carrier_risk: float | None,
                   carrier_density: np.ndarray | None = None,
                   genes: Sequence[str] = DEFAULT_GENES) -> PenetranceTable:
    (nc_modal, nc_shape), (c_modal, c_shape) = _STANDIN_SHAPES[cancer]
    noncar = weibull_density(nc_modal, nc_shape, noncar_risk)
    if carrier_density is None:
        carrier_density = weibull_density(c_modal, c_shape, carrier_risk)
    sexes = (FEMALE,) if cancer == ENDOMETRIAL else (FEMALE, MALE)
    densities = {}
    for sex in sexes:
        densities[(sex, NONCARRIER)] = noncar
        for g in genes:
            densities[(sex, g)] = carrier_density
    restriction = FEMALE if cancer == ENDOMETRIAL else None
    return PenetranceTable(cancer, densities, restriction)


def default_tables(scenario: str, gastric_signal: str = "high",
                   genes: Sequence[str] = DEFAULT_GENES) -> dict[str, PenetranceTable]:
    """Data-generating tables for a scenario.

    scenario "high" uses the full carrier risks; "low" rescales the
    colorectal and endometrial carrier risks to 0.2. gastric_signal "high"
    fixes gastric lifetime risks to 0.05 (noncarrier) and 0.5 (carrier);
    "low" uses a 0.01 noncarrier risk with carriers at exactly twice the
    noncarrier density.
    """
    if scenario not in ("low", "high"):
        raise ValueError(f"unknown scenario {scenario!r}")
    if gastric_signal not in ("low", "high"):
        raise ValueError(f"unknown gastric_signal {gastric_signal!r}")

    carrier = dict(_STANDIN_CARRIER_RISK_HIGH)
    if scenario == "low":
        carrier.update(_STANDIN_CARRIER_RISK_LOW)

    tables = {
        COLORECTAL: _standin_table(COLORECTAL, _STANDIN_NONCARRIER_RISK[COLORECTAL],
                                   carrier[COLORECTAL], genes=genes),
        ENDOMETRIAL: _standin_table(ENDOMETRIAL, _STANDIN_NONCARRIER_RISK[ENDOMETRIAL],
                                    carrier[ENDOMETRIAL], genes=genes),
    }
    if gastric_signal == "high":
        tables[GASTRIC] = _standin_table(GASTRIC, _STANDIN_NONCARRIER_RISK[GASTRIC],
                                         carrier[GASTRIC], genes=genes)
    else:
        (nc_modal, nc_shape), _ = _STANDIN_SHAPES[GASTRIC]
        noncar = weibull_density(nc_modal, nc_shape, _GASTRIC_LOW_NONCARRIER_RISK)
        tables[GASTRIC] = _standin_table(GASTRIC, _GASTRIC_LOW_NONCARRIER_RISK, None,
                                         carrier_density=2.0 * noncar, genes=genes)
    return tables


def default_frequencies(genes: Sequence[str] = DEFAULT_GENES,
                        q: float = DEFAULT_ALLELE_FREQUENCY) -> AlleleFrequencies:
    return AlleleFrequencies({g: q for g in genes})


# -- CSV I/O -----------------------------------------------------------------

_PEN_COLUMNS = ["cancer", "sex", "carrier_key", "age", "density"]


def write_penetrance_csv(path, tables: Mapping[str, PenetranceTable]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_PEN_COLUMNS)
        for cancer in sorted(tables):
            table = tables[cancer]
            for (sex, key) in sorted(table.densities):
                f = table.densities[(sex, key)]
                for age, val in enumerate(f, start=1):
                    w.writerow([cancer, sex, key, age, repr(float(val))])


def read_penetrance_csv(path, sex_specific: Mapping[str, str] | None = None) -> dict[str, PenetranceTable]:
    """Load tables from CSV; each (cancer, sex, carrier_key) must cover ages 1..T_MAX."""
    sex_specific = sex_specific or {}
    raw: dict[str, dict[tuple[str, str], dict[int, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for col in _PEN_COLUMNS:
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise ValueError(f"{path}: missing column {col!r}")
        for row in reader:
            cancer = row["cancer"].strip()
            slot = raw.setdefault(cancer, {}).setdefault((row["sex"].strip(), row["carrier_key"].strip()), {})
            age = int(row["age"])
            if age in slot:
                raise ValueError(f"{path}: duplicate age {age} for {cancer}")
            slot[age] = float(row["density"])

    tables = {}
    for cancer, groups in raw.items():
        densities = {}
        seen_sexes = set()
        for (sex, key), by_age in groups.items():
            if sorted(by_age) != list(range(1, T_MAX + 1)):
                raise ValueError(f"{path}: {cancer}/{sex}/{key} must cover ages 1..{T_MAX} contiguously")
            densities[(sex, key)] = np.array([by_age[a] for a in range(1, T_MAX + 1)])
            seen_sexes.add(sex)
        restriction = sex_specific.get(cancer)
        if restriction is None and seen_sexes == {FEMALE}:
            restriction = FEMALE
        elif restriction is None and seen_sexes == {MALE}:
            restriction = MALE
        tables[cancer] = PenetranceTable(cancer, densities, restriction)
    return tables


def all_genotypes(space: GenotypeSpace):
    """Iterate (index, states) over the joint genotype space in index order."""
    for idx in range(space.n_genotypes):
        yield idx, space.states(idx)


def genotype_curves(table: PenetranceTable, genes: Sequence[str]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Survival and density matrices over carried-gene subsets, per sex.

    Returns {sex: (surv, dens)} with arrays of shape [2**n_genes, T_MAX + 1]
    indexed by the carried-gene bitmask (gene k -> bit k) and by age; column 0
    is 1.0 in both so that "age unknown" lookups contribute a factor of 1.
    Results are cached on the table, which is immutable after construction.
    """
    cached = table._curve_cache.get(tuple(genes))
    if cached is not None:
        return cached
    n_sub = 1 << len(genes)
    out = {}
    for sex in sorted({s for s, _ in table.densities}):
        surv = np.ones((n_sub, T_MAX + 1))
        for subset in range(n_sub):
            carried = [g for k, g in enumerate(genes) if subset >> k & 1]
            if not carried:
                surv[subset] = table.survival(sex, NONCARRIER)
            else:
                s = np.ones(T_MAX + 1)
                for g in carried:
                    s = s * table.survival(sex, g)
                surv[subset] = s
        dens = np.ones((n_sub, T_MAX + 1))
        dens[:, 1:] = surv[:, :-1] - surv[:, 1:]
        out[sex] = (surv, dens)
    table._curve_cache[tuple(genes)] = out
    return out
