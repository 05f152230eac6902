"""Pure-numpy reference implementations of the hot kernels."""

from __future__ import annotations

import numpy as np


class PeelContext:
    """Shared peeling state for one (prior, transmission) pair.

    Families are scored against the same genotype prior and transmission
    tensor thousands of times; this hoists the tensor preprocessing out of
    the per-family call.
    """

    def __init__(self, prior: np.ndarray, trans: np.ndarray):
        self.prior = np.ascontiguousarray(prior, dtype=float)
        self.n_geno = self.prior.shape[0]
        self.trans = np.ascontiguousarray(trans, dtype=float)
        self.trans2 = np.ascontiguousarray(trans.reshape(self.n_geno**2, self.n_geno))

    def posterior(self, fathers, mothers, pen, target):
        return _peel(fathers, mothers, pen, self.prior, self.trans2, target)


def peel_posterior(fathers: np.ndarray, mothers: np.ndarray, pen: np.ndarray,
                   prior: np.ndarray, trans: np.ndarray, target: int) -> np.ndarray:
    """Genotype posterior of one member by peeling over nuclear families.

    fathers/mothers hold member indices (-1 for founders), pen[i, g] the
    phenotype likelihood of member i under joint genotype g, prior the founder
    genotype distribution and trans[f, m, c] the child-given-parents kernel.
    Messages are passed between nuclear families; every message is normalized,
    which keeps products of many likelihood factors away from underflow. The
    marriage graph must be loop-free or the recursion would not terminate.
    """
    return PeelContext(prior, trans).posterior(fathers, mothers, pen, target)


def _peel(fathers, mothers, pen, prior, trans2, target):
    n, n_geno = pen.shape

    fam_parents: list[tuple[int, int]] = []
    fam_children: list[list[int]] = []
    fam_of_child = np.full(n, -1, dtype=np.int64)
    couple_index: dict[tuple[int, int], int] = {}
    for i in range(n):
        f, m = int(fathers[i]), int(mothers[i])
        if f < 0:
            continue
        key = (f, m)
        if key not in couple_index:
            couple_index[key] = len(fam_parents)
            fam_parents.append(key)
            fam_children.append([])
        k = couple_index[key]
        fam_of_child[i] = k
        fam_children[k].append(i)

    parent_fams: list[list[int]] = [[] for _ in range(n)]
    for k, (f, m) in enumerate(fam_parents):
        parent_fams[f].append(k)
        parent_fams[m].append(k)

    anterior_memo: dict[int, np.ndarray] = {}
    up_memo: dict[tuple[int, int], np.ndarray] = {}

    def child_local(c: int) -> np.ndarray:
        # evidence at c plus everything below c, excluding c's own ancestry
        v = pen[c]
        for k in parent_fams[c]:
            v = v * up_msg(k, c)
        return v

    def belief_excl(i: int, excl_fam: int) -> np.ndarray:
        v = anterior(i) * pen[i]
        for k in parent_fams[i]:
            if k != excl_fam:
                v = v * up_msg(k, i)
        return v

    def child_matrix(c: int) -> np.ndarray:
        # W[f, m] = sum_c trans[f, m, c] * child_local(c)[c]
        return (trans2 @ child_local(c)).reshape(n_geno, n_geno)

    def up_msg(k: int, parent: int) -> np.ndarray:
        got = up_memo.get((k, parent))
        if got is not None:
            return got
        f, m = fam_parents[k]
        other = m if parent == f else f
        q = belief_excl(other, k)
        w = child_matrix(fam_children[k][0])
        for c in fam_children[k][1:]:
            w = w * child_matrix(c)
        r = w @ q if parent == f else w.T @ q
        total = r.sum()
        if total <= 0.0:
            raise ValueError("pedigree likelihood is zero: phenotypes impossible under the tables")
        r = r / total
        up_memo[(k, parent)] = r
        return r

    def anterior(i: int) -> np.ndarray:
        got = anterior_memo.get(i)
        if got is not None:
            return got
        k = fam_of_child[i]
        if k < 0:
            a = prior.astype(float)
        else:
            f, m = fam_parents[k]
            joint = np.outer(belief_excl(f, k), belief_excl(m, k))
            for c in fam_children[k]:
                if c != i:
                    joint = joint * child_matrix(c)
            a = joint.reshape(-1) @ trans2
        total = a.sum()
        if total <= 0.0:
            raise ValueError("pedigree likelihood is zero: phenotypes impossible under the tables")
        a = a / total
        anterior_memo[i] = a
        return a

    post = anterior(target) * pen[target]
    for k in parent_fams[target]:
        post = post * up_msg(k, target)
    total = post.sum()
    if total <= 0.0:
        raise ValueError("pedigree likelihood is zero: phenotypes impossible under the tables")
    return post / total


def best_split_column(values: np.ndarray, grad: np.ndarray, hess: np.ndarray,
                      min_child_weight: float) -> tuple[float, float]:
    """Best split of one feature column, already sorted by value.

    Returns (gain, threshold); gain is -inf when no admissible split exists.
    Candidate thresholds are midpoints between consecutive distinct values,
    gain is the second-order loss reduction G_L^2/H_L + G_R^2/H_R - G^2/H and
    both children must carry at least min_child_weight of hessian mass. Ties
    keep the lowest threshold.
    """
    m = values.shape[0]
    if m < 2:
        return -np.inf, 0.0
    gl = np.cumsum(grad)[:-1]
    hl = np.cumsum(hess)[:-1]
    gt, ht = gl[-1] + grad[-1], hl[-1] + hess[-1]
    gr = gt - gl
    hr = ht - hl

    boundary = values[1:] != values[:-1]
    ok = boundary & (hl >= min_child_weight) & (hr >= min_child_weight) & (hl > 0.0) & (hr > 0.0)
    if not ok.any():
        return -np.inf, 0.0
    parent = (gt * gt / ht) if ht > 0.0 else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = gl * gl / hl + gr * gr / hr - parent
    gain[~ok] = -np.inf
    best = int(np.argmax(gain))
    if not gain[best] > 0.0:
        return -np.inf, 0.0
    return float(gain[best]), float(0.5 * (values[best] + values[best + 1]))
