"""Immutable family data model: individuals, pedigrees, validation, CSV I/O.

Ages are discrete integers 1..T_MAX, with AGE_NEVER = T_MAX + 1 meaning
"survived the whole age range" and AGE_UNKNOWN = 0 meaning "no phenotype
information" (a likelihood factor of exactly 1 downstream).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

T_MAX = 94
AGE_NEVER = T_MAX + 1
AGE_UNKNOWN = 0

FEMALE = "F"
MALE = "M"


@dataclass(frozen=True)
class PhenotypeRecord:
    """Observed disease status for one cancer: affected flag and observed age.

    observed_age is the diagnosis age when affected, the censoring age when
    not, and AGE_UNKNOWN when nothing is known.
    """

    affected: bool = False
    observed_age: int = AGE_UNKNOWN


NO_PHENOTYPE = PhenotypeRecord(False, AGE_UNKNOWN)


@dataclass(frozen=True)
class Individual:
    id: str
    sex: str
    mother_id: Optional[str] = None
    father_id: Optional[str] = None
    current_age: int = AGE_NEVER
    phenotypes: Mapping[str, PhenotypeRecord] = field(default_factory=dict)

    @property
    def is_founder(self) -> bool:
        return self.mother_id is None and self.father_id is None

    def phenotype(self, cancer_id: str) -> PhenotypeRecord:
        return self.phenotypes.get(cancer_id, NO_PHENOTYPE)


@dataclass(frozen=True)
class NuclearFamily:
    father: Individual
    mother: Individual
    children: tuple[Individual, ...]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...]


class Pedigree:
    """A family of individuals with one designated counselee.

    Members are stored sorted by id so that all derived quantities are
    independent of input order. Instances are treated as immutable.
    """

    def __init__(self, members: Iterable[Individual], counselee_id: str):
        self.members: tuple[Individual, ...] = tuple(
            sorted(members, key=lambda m: m.id)
        )
        self.counselee_id = counselee_id
        self._by_id = {m.id: m for m in self.members}

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def member(self, member_id: str) -> Individual:
        return self._by_id[member_id]

    def has_member(self, member_id: str) -> bool:
        return member_id in self._by_id

    @property
    def counselee(self) -> Individual:
        return self._by_id[self.counselee_id]

    @property
    def counselee_index(self) -> int:
        return next(i for i, m in enumerate(self.members) if m.id == self.counselee_id)


def validate(pedigree: Pedigree) -> ValidationReport:
    """Check every structural invariant; violations are data, not exceptions."""
    bad: list[str] = []
    ids = [m.id for m in pedigree.members]
    if len(set(ids)) != len(ids):
        bad.append("duplicate member ids")
    if not pedigree.has_member(pedigree.counselee_id):
        bad.append(f"counselee {pedigree.counselee_id!r} not among members")

    for m in pedigree.members:
        if m.sex not in (FEMALE, MALE):
            bad.append(f"{m.id}: sex must be {FEMALE!r} or {MALE!r}")
        if (m.mother_id is None) != (m.father_id is None):
            bad.append(f"{m.id}: one parent given, founders must have neither")
        for which, pid, want in (
            ("mother", m.mother_id, FEMALE),
            ("father", m.father_id, MALE),
        ):
            if pid is None:
                continue
            if not pedigree.has_member(pid):
                bad.append(f"{m.id}: {which} {pid!r} not in pedigree")
            elif pedigree.member(pid).sex != want:
                bad.append(f"{m.id}: {which} not {'female' if want == FEMALE else 'male'}")
        if not 1 <= m.current_age <= AGE_NEVER:
            bad.append(f"{m.id}: current_age {m.current_age} outside [1, {AGE_NEVER}]")
        for cancer, rec in m.phenotypes.items():
            if rec.affected:
                if not 1 <= rec.observed_age <= T_MAX:
                    bad.append(f"{m.id}/{cancer}: affected but observed_age {rec.observed_age} outside [1, {T_MAX}]")
                if rec.observed_age > m.current_age:
                    bad.append(f"{m.id}/{cancer}: diagnosis age exceeds current age")
            elif rec.observed_age not in (AGE_UNKNOWN, m.current_age):
                bad.append(f"{m.id}/{cancer}: unaffected observed_age must equal current_age (or 0 for unknown)")

    if not bad:
        if _parent_cycle(pedigree):
            bad.append("parent-child graph has a cycle")
        elif _marriage_graph_has_loop(pedigree):
            bad.append("pedigree has a marriage loop (inbreeding or cross-marriage)")

    return ValidationReport(ok=not bad, violations=tuple(bad))


def _parent_cycle(pedigree: Pedigree) -> bool:
    state: dict[str, int] = {}  # 0 visiting, 1 done

    def visit(mid: str) -> bool:
        if state.get(mid) == 1:
            return False
        if state.get(mid) == 0:
            return True
        state[mid] = 0
        m = pedigree.member(mid)
        for pid in (m.mother_id, m.father_id):
            if pid is not None and visit(pid):
                return True
        state[mid] = 1
        return False

    return any(visit(m.id) for m in pedigree.members)


def _marriage_graph_has_loop(pedigree: Pedigree) -> bool:
    """Cycle check on the bipartite individual/marriage-node graph.

    Nodes are individuals plus one node per couple; a couple connects to both
    partners and to each of its children. The peeling recursion needs this
    graph to be a forest.
    """
    couples = {}
    edges: list[tuple[str, str]] = []
    for m in pedigree.members:
        if m.is_founder:
            continue
        key = (m.father_id, m.mother_id)
        if key not in couples:
            cnode = f"~couple{len(couples)}"
            couples[key] = cnode
            edges.append((cnode, m.father_id))
            edges.append((cnode, m.mother_id))
        edges.append((couples[key], m.id))

    parent: dict[str, str] = {}

    def find(x: str) -> str:
        root = x
        while parent.get(root, root) != root:
            root = parent[root]
        while parent.get(x, x) != x:
            parent[x], x = root, parent[x]
        return root

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra == rb:
            return True
        parent[ra] = rb
    return False


def founders(pedigree: Pedigree) -> list[Individual]:
    """Members with no parents, in id order."""
    return [m for m in pedigree.members if m.is_founder]


def nuclear_families(pedigree: Pedigree) -> list[NuclearFamily]:
    """One entry per couple; every non-founder appears as a child exactly once."""
    groups: dict[tuple[str, str], list[Individual]] = {}
    for m in pedigree.members:
        if not m.is_founder:
            groups.setdefault((m.father_id, m.mother_id), []).append(m)
    return [
        NuclearFamily(pedigree.member(fid), pedigree.member(mid), tuple(kids))
        for (fid, mid), kids in sorted(groups.items())
    ]


# CSV format: one row per individual, families are the connected components
# of the parent graph, so ids must be unique across the whole file.

_BASE_COLUMNS = ["id", "sex", "mother_id", "father_id", "current_age", "counselee"]


def write_pedigree_csv(path, pedigrees: Sequence[Pedigree], cancers: Sequence[str]) -> None:
    header = _BASE_COLUMNS + [c for cancer in cancers for c in (f"affected_{cancer}", f"age_{cancer}")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for ped in pedigrees:
            for m in ped.members:
                row = [
                    m.id,
                    m.sex,
                    m.mother_id or "",
                    m.father_id or "",
                    m.current_age,
                    1 if m.id == ped.counselee_id else 0,
                ]
                for cancer in cancers:
                    rec = m.phenotype(cancer)
                    row += [1 if rec.affected else 0, rec.observed_age]
                w.writerow(row)


def read_pedigree_csv(path) -> list[Pedigree]:
    """Read one or more families from a pedigree CSV.

    Families are recovered as connected components of the parent links; each
    component must contain exactly one row flagged as counselee.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: missing header row")
        for col in _BASE_COLUMNS:
            if col not in reader.fieldnames:
                raise ValueError(f"{path}: missing column {col!r}")
        cancers = [c[len("affected_"):] for c in reader.fieldnames if c.startswith("affected_")]
        rows = list(reader)

    members: dict[str, Individual] = {}
    counselee_ids = []
    for row in rows:
        phenos = {}
        for cancer in cancers:
            affected = row[f"affected_{cancer}"].strip() in ("1", "true", "True")
            age = int(row[f"age_{cancer}"] or 0)
            phenos[cancer] = PhenotypeRecord(affected, age)
        ind = Individual(
            id=row["id"].strip(),
            sex=row["sex"].strip(),
            mother_id=row["mother_id"].strip() or None,
            father_id=row["father_id"].strip() or None,
            current_age=int(row["current_age"]),
            phenotypes=phenos,
        )
        if ind.id in members:
            raise ValueError(f"{path}: duplicate id {ind.id!r}")
        members[ind.id] = ind
        if row["counselee"].strip() in ("1", "true", "True"):
            counselee_ids.append(ind.id)

    comp = {mid: mid for mid in members}

    def find(x: str) -> str:
        while comp[x] != x:
            comp[x] = comp[comp[x]]
            x = comp[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            comp[ra] = rb

    for ind in members.values():
        for pid in (ind.mother_id, ind.father_id):
            if pid is not None:
                if pid not in members:
                    raise ValueError(f"{path}: {ind.id} references missing parent {pid!r}")
                union(ind.id, pid)

    by_root: dict[str, list[Individual]] = {}
    for ind in members.values():
        by_root.setdefault(find(ind.id), []).append(ind)

    pedigrees = []
    for root, group in sorted(by_root.items()):
        group_ids = {g.id for g in group}
        marked = [cid for cid in counselee_ids if cid in group_ids]
        if len(marked) != 1:
            raise ValueError(f"{path}: family of {sorted(group_ids)[0]} has {len(marked)} counselees, expected 1")
        pedigrees.append(Pedigree(group, marked[0]))
    return pedigrees
