"""Carrier-probability engine: exact genotype posteriors from family history.

The posterior of the counselee's joint genotype given every relative's
cancer history combines Hardy-Weinberg founder priors, Mendelian
transmission, and per-member phenotype likelihoods, all assumed
conditionally independent given genotypes. Two evaluators are provided: a
brute-force sum over all genotype configurations (the oracle, exponential in
family size) and nuclear-family peeling (linear in the number of families).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .pedigree import (
    AGE_UNKNOWN,
    T_MAX,
    Individual,
    Pedigree,
    _marriage_graph_has_loop,
)
from .penetrance import (
    AlleleFrequencies,
    GenotypeSpace,
    PenetranceTable,
    genotype_curves,
    prevalence,
    transmission_tensor,
)

BRUTEFORCE_LIMIT = 12  # max n_members * n_genes for exhaustive enumeration


class PedigreeLoopError(ValueError):
    pass


@dataclass(frozen=True)
class CarrierPosterior:
    """Posterior over the counselee's joint genotypes."""

    probabilities: np.ndarray
    space: GenotypeSpace

    @property
    def carrier_probability(self) -> float:
        return float(1.0 - self.probabilities[0])


class MendelianModel:
    """Precomputed engine for one (penetrance tables, allele frequencies) pair.

    Construction expands the tables into genotype-indexed survival/density
    matrices so that scoring a pedigree is pure array work. Cancers absent
    from `tables` contribute nothing to the likelihood (their family history
    is ignored), which is how models that exclude a cancer are expressed.
    """

    def __init__(self, tables: Mapping[str, PenetranceTable],
                 freqs: AlleleFrequencies, genes: Sequence[str]):
        self.genes = tuple(genes)
        self.space = GenotypeSpace(self.genes)
        self.tables = dict(tables)
        self.freqs = freqs
        self.prior = prevalence(freqs, self.space)
        self.trans = transmission_tensor(self.space.n_genes)
        self.subset_of = self.space.carrier_mask()  # genotype -> carried-gene bitmask

        # per (cancer, sex): genotype-subset survival/density matrices; column 0
        # is 1.0 so that "age unknown" lookups are a factor of 1
        self._factors: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
        for cancer, table in self.tables.items():
            for sex, curves in genotype_curves(table, self.genes).items():
                self._factors[(cancer, sex)] = curves
        self._peel = _kernels.PeelContext(self.prior, self.trans)

    # -- likelihoods ---------------------------------------------------------

    def phenotype_likelihood(self, individual: Individual, genotype_states: Sequence[int]) -> float:
        """P(this member's cancer record | joint genotype)."""
        subset = 0
        for k, s in enumerate(genotype_states):
            if s >= 1:
                subset |= 1 << k
        out = 1.0
        for cancer in self.tables:
            key = (cancer, individual.sex)
            if key not in self._factors:
                continue  # cancer restricted to the other sex
            surv, dens = self._factors[key]
            rec = individual.phenotype(cancer)
            if rec.observed_age == AGE_UNKNOWN and not rec.affected:
                continue
            if rec.affected:
                if not 1 <= rec.observed_age <= T_MAX:
                    raise ValueError(f"{individual.id}/{cancer}: affected age outside 1..{T_MAX}")
                out *= dens[subset, rec.observed_age]
            else:
                if not 0 <= rec.observed_age <= T_MAX + 1:
                    raise ValueError(f"{individual.id}/{cancer}: observed age outside 0..{T_MAX + 1}")
                out *= surv[subset, min(rec.observed_age, T_MAX)]
        return float(out)

    def pen_matrix(self, pedigree: Pedigree) -> np.ndarray:
        """Phenotype likelihood of every member under every joint genotype."""
        return self._pen_for_members(pedigree.members)

    def _pen_for_members(self, members: Sequence[Individual]) -> np.ndarray:
        n = len(members)
        pen = np.ones((n, self.space.n_genotypes))
        sexes = np.array([m.sex for m in members])
        for cancer in self.tables:
            affected = np.fromiter(
                (m.phenotype(cancer).affected for m in members), bool, n
            )
            ages = np.fromiter(
                (m.phenotype(cancer).observed_age for m in members), np.int64, n
            )
            for sex in (s for (c, s) in self._factors if c == cancer):
                surv, dens = self._factors[(cancer, sex)]
                surv_g = surv[self.subset_of]  # [n_geno, T_MAX+1]
                dens_g = dens[self.subset_of]
                rows = np.nonzero(sexes == sex)[0]
                aff = rows[affected[rows]]
                unaff = rows[~affected[rows]]
                if aff.size:
                    pen[aff] *= dens_g[:, ages[aff]].T
                if unaff.size:
                    pen[unaff] *= surv_g[:, np.minimum(ages[unaff], T_MAX)].T
        return pen

    def _parent_arrays(self, pedigree: Pedigree) -> tuple[np.ndarray, np.ndarray]:
        pos = {m.id: i for i, m in enumerate(pedigree.members)}
        fa = np.full(len(pedigree), -1, dtype=np.int64)
        mo = np.full(len(pedigree), -1, dtype=np.int64)
        for i, m in enumerate(pedigree.members):
            if m.father_id is not None:
                fa[i] = pos[m.father_id]
                mo[i] = pos[m.mother_id]
        return fa, mo

    # -- posteriors ------------------------------------------------------------

    def posterior_bruteforce(self, pedigree: Pedigree) -> CarrierPosterior:
        """Exact posterior by summing over every genotype configuration."""
        n = len(pedigree)
        if n * self.space.n_genes > BRUTEFORCE_LIMIT:
            raise ValueError(
                f"brute force needs n_members * n_genes <= {BRUTEFORCE_LIMIT}, "
                f"got {n} * {self.space.n_genes}"
            )
        n_geno = self.space.n_genotypes
        pen = self.pen_matrix(pedigree)
        fa, mo = self._parent_arrays(pedigree)
        configs = np.indices((n_geno,) * n).reshape(n, -1)
        weights = np.ones(configs.shape[1])
        for j in range(n):
            gj = configs[j]
            if fa[j] < 0:
                weights *= self.prior[gj]
            else:
                weights *= self.trans[configs[fa[j]], configs[mo[j]], gj]
            weights *= pen[j][gj]
        t = pedigree.counselee_index
        posterior = np.bincount(configs[t], weights=weights, minlength=n_geno)
        total = posterior.sum()
        if total <= 0:
            raise ValueError("pedigree likelihood is zero: phenotypes impossible under the tables")
        return CarrierPosterior(posterior / total, self.space)

    def posterior_peeling(self, pedigree: Pedigree) -> CarrierPosterior:
        """Posterior via nuclear-family peeling; matches brute force to 1e-10."""
        if _marriage_graph_has_loop(pedigree):
            raise PedigreeLoopError(
                f"pedigree of {pedigree.counselee_id} has a marriage loop; peeling requires loop-free pedigrees"
            )
        pen = self.pen_matrix(pedigree)
        fa, mo = self._parent_arrays(pedigree)
        t = pedigree.counselee_index
        post = np.asarray(self._peel.posterior(fa, mo, pen, t))
        return CarrierPosterior(post, self.space)

    def carrier_probability(self, pedigree: Pedigree) -> float:
        return self.posterior_peeling(pedigree).carrier_probability

    def score(self, pedigrees: Sequence[Pedigree]) -> np.ndarray:
        """Carrier probability of every counselee.

        The phenotype-likelihood matrices of all families are built in one
        batched pass; the peeling itself runs family by family.
        """
        counts = np.array([len(p) for p in pedigrees], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        flat = [m for p in pedigrees for m in p.members]
        pen_all = self._pen_for_members(flat)
        out = np.empty(len(pedigrees))
        for j, ped in enumerate(pedigrees):
            fa, mo = self._parent_arrays(ped)
            post = self._peel.posterior(fa, mo, pen_all[offsets[j]:offsets[j + 1]],
                                        ped.counselee_index)
            out[j] = 1.0 - post[0]
        return out


# -- spec-shaped convenience wrappers ---------------------------------------


def phenotype_likelihood(individual: Individual, genotype_states: Sequence[int],
                         tables: Mapping[str, PenetranceTable],
                         freqs: AlleleFrequencies, genes: Sequence[str]) -> float:
    return MendelianModel(tables, freqs, genes).phenotype_likelihood(individual, genotype_states)


def carrier_posterior_bruteforce(pedigree: Pedigree, tables: Mapping[str, PenetranceTable],
                                 freqs: AlleleFrequencies, genes: Sequence[str]) -> CarrierPosterior:
    return MendelianModel(tables, freqs, genes).posterior_bruteforce(pedigree)


def carrier_posterior_peeling(pedigree: Pedigree, tables: Mapping[str, PenetranceTable],
                              freqs: AlleleFrequencies, genes: Sequence[str]) -> CarrierPosterior:
    return MendelianModel(tables, freqs, genes).posterior_peeling(pedigree)
