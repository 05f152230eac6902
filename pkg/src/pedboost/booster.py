"""Gradient-boosted regression trees with logistic loss and free initialization.

The initialization is a per-sample log-odds vector, so the ensemble can
start from an existing model's predictions and learn corrections to them;
the usual cold start is the sample log odds. Trees are grown greedily with
second-order statistics: gradient p - y, hessian p(1 - p), leaf weight
-sum(g)/sum(h), and a per-iteration subsample of the training rows. Splits
use midpoint thresholds between consecutive distinct feature values; ties in
gain go to the lowest feature index, then the lowest threshold.

Also home to the family-history feature extractor: one feature per cancer,
the proportion of (sex-eligible) family members affected by it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .pedigree import Pedigree

SCORE_CLAMP = 15.0  # |log-odds| beyond this saturates a float64 sigmoid


@dataclass(frozen=True)
class BoostParams:
    iterations: int = 50
    max_depth: int = 2
    shrinkage: float = 0.1
    bag_fraction: float = 0.5
    min_child_weight: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.iterations < 0 or self.max_depth < 1:
            raise ValueError("need iterations >= 0 and max_depth >= 1")
        if not 0 <= self.shrinkage <= 1 or not 0 < self.bag_fraction <= 1:
            raise ValueError("need shrinkage in [0, 1] and bag_fraction in (0, 1]")


@dataclass
class Tree:
    """Flat binary tree; node 0 is the root, leaves have feature == -1."""

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    weight: list[float] = field(default_factory=list)

    def add_leaf(self, w: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.weight.append(w)
        return len(self.feature) - 1

    def add_split(self, feat: int, thr: float) -> int:
        self.feature.append(feat)
        self.threshold.append(thr)
        self.left.append(-1)
        self.right.append(-1)
        self.weight.append(0.0)
        return len(self.feature) - 1

    def raw(self, x: np.ndarray) -> np.ndarray:
        """Unscaled leaf weight for every row of x."""
        out = np.empty(x.shape[0])

        def walk(node: int, rows: np.ndarray) -> None:
            if self.feature[node] < 0:
                out[rows] = self.weight[node]
                return
            goes_left = x[rows, self.feature[node]] < self.threshold[node]
            walk(self.left[node], rows[goes_left])
            walk(self.right[node], rows[~goes_left])

        walk(0, np.arange(x.shape[0]))
        return out


@dataclass
class BoostModel:
    trees: list[Tree]
    params: BoostParams
    feature_names: tuple[str, ...]

    def decision_raw(self, x: np.ndarray) -> np.ndarray:
        """Shrinkage-scaled sum of leaf weights."""
        out = np.zeros(x.shape[0])
        for tree in self.trees:
            out += tree.raw(x)
        return self.params.shrinkage * out


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def clamp_scores(scores: np.ndarray) -> np.ndarray:
    return np.clip(scores, -SCORE_CLAMP, SCORE_CLAMP)


def default_init(labels: np.ndarray) -> float:
    """Cold-start constant: the sample log odds."""
    labels = np.asarray(labels, dtype=float)
    ybar = labels.mean()
    if ybar <= 0.0 or ybar >= 1.0:
        raise ValueError("labels contain a single class; log odds undefined")
    return float(np.log(ybar / (1.0 - ybar)))


def _check_training_inputs(features, labels, init_scores):
    if features.shape[0] == 0:
        raise ValueError("empty training set")
    if features.shape[0] != labels.shape[0] or labels.shape[0] != init_scores.shape[0]:
        raise ValueError("features, labels and init_scores must have equal length")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValueError("labels must be binary")
    if not np.isfinite(init_scores).all():
        raise ValueError("init_scores must be finite")


def _grow_tree(x: np.ndarray, grad: np.ndarray, hess: np.ndarray, params: BoostParams) -> Tree:
    tree = Tree()

    def leaf_weight(rows: np.ndarray) -> float:
        h = hess[rows].sum()
        return float(-grad[rows].sum() / h) if h > 0.0 else 0.0

    def build(rows: np.ndarray, depth: int) -> int:
        if depth >= params.max_depth or rows.size < 2:
            return tree.add_leaf(leaf_weight(rows))
        best_gain, best_feat, best_thr = -np.inf, -1, 0.0
        for f in range(x.shape[1]):
            order = np.argsort(x[rows, f], kind="stable")
            sorted_rows = rows[order]
            gain, thr = _kernels.best_split_column(
                np.ascontiguousarray(x[sorted_rows, f]),
                np.ascontiguousarray(grad[sorted_rows]),
                np.ascontiguousarray(hess[sorted_rows]),
                params.min_child_weight,
            )
            if gain > best_gain:
                best_gain, best_feat, best_thr = gain, f, thr
        if not best_gain > 0.0:
            return tree.add_leaf(leaf_weight(rows))
        node = tree.add_split(best_feat, best_thr)
        goes_left = x[rows, best_feat] < best_thr
        tree.left[node] = build(rows[goes_left], depth + 1)
        tree.right[node] = build(rows[~goes_left], depth + 1)
        return node

    build(np.arange(x.shape[0]), 0)
    return tree


def fit(features: np.ndarray, labels: np.ndarray, init_scores: np.ndarray,
        params: BoostParams, feature_names: Sequence[str] | None = None) -> BoostModel:
    """Boost trees against the logistic loss starting from init_scores."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=float)
    init = np.broadcast_to(np.asarray(init_scores, dtype=float), y.shape)
    _check_training_inputs(x, y, init)
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"x{j}" for j in range(x.shape[1])
    )
    if len(names) != x.shape[1]:
        raise ValueError("feature_names length must match feature count")

    # canonical sample order: training is invariant to input permutations,
    # bitwise, including the bagging draws
    canonical = np.lexsort((init, y) + tuple(x[:, j] for j in range(x.shape[1] - 1, -1, -1)))
    x, y, init = x[canonical], y[canonical], init[canonical]

    rng = np.random.default_rng(params.rng_seed)
    n = x.shape[0]
    n_bag = max(1, int(round(params.bag_fraction * n)))
    scores = clamp_scores(init).astype(float)
    trees: list[Tree] = []
    for _ in range(params.iterations):
        p = sigmoid(scores)
        grad = p - y
        hess = p * (1.0 - p)
        rows = np.sort(rng.choice(n, size=n_bag, replace=False)) if n_bag < n else np.arange(n)
        tree = _grow_tree(x[rows], grad[rows], hess[rows], params)
        trees.append(tree)
        scores = scores + params.shrinkage * tree.raw(x)
    return BoostModel(trees, params, names)


def predict(model: BoostModel, features: np.ndarray, init_scores: np.ndarray) -> np.ndarray:
    """Carrier probabilities: sigmoid(init + scaled ensemble correction)."""
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != len(model.feature_names):
        raise ValueError(
            f"model expects {len(model.feature_names)} features, got {x.shape[1]}"
        )
    init = np.broadcast_to(np.asarray(init_scores, dtype=float), (x.shape[0],))
    return sigmoid(clamp_scores(init) + model.decision_raw(x))


def logistic_loss(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mean logistic loss log(1 + exp(s)) - y*s at log-odds scores."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


def prob_to_score(p: np.ndarray) -> np.ndarray:
    """Log odds of probabilities, clamped so 0 and 1 stay finite."""
    p = np.clip(np.asarray(p, dtype=float), 1e-12, 1.0 - 1e-12)
    return clamp_scores(np.log(p / (1.0 - p)))


# -- family-history features -------------------------------------------------


def extract_features(pedigree: Pedigree, cancers: Sequence[str],
                     restrictions: Mapping[str, str | None] | None = None,
                     include_counselee: bool = True) -> np.ndarray:
    """Per-cancer proportion of eligible family members affected.

    For a sex-restricted cancer only members of that sex count, in both the
    numerator and the denominator; a cancer with no eligible members gets 0.
    """
    restrictions = restrictions or {}
    members = [
        m for m in pedigree.members
        if include_counselee or m.id != pedigree.counselee_id
    ]
    out = np.zeros(len(cancers))
    for j, cancer in enumerate(cancers):
        want = restrictions.get(cancer)
        eligible = [m for m in members if want is None or m.sex == want]
        if eligible:
            out[j] = sum(m.phenotype(cancer).affected for m in eligible) / len(eligible)
    return out


def extract_features_batch(pedigrees: Sequence[Pedigree], cancers: Sequence[str],
                           restrictions: Mapping[str, str | None] | None = None,
                           include_counselee: bool = True) -> np.ndarray:
    return np.array([
        extract_features(p, cancers, restrictions, include_counselee) for p in pedigrees
    ])


# -- plain-text model serialization -------------------------------------------

_FORMAT_TAG = "pedboost-tree-ensemble v1"


def dump_model(model: BoostModel) -> str:
    p = model.params
    lines = [
        _FORMAT_TAG,
        f"params iterations={p.iterations} max_depth={p.max_depth} "
        f"shrinkage={p.shrinkage!r} bag_fraction={p.bag_fraction!r} "
        f"min_child_weight={p.min_child_weight!r} rng_seed={p.rng_seed}",
        "features " + " ".join(model.feature_names),
    ]
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} nodes {len(tree.feature)}")
        for i in range(len(tree.feature)):
            if tree.feature[i] < 0:
                lines.append(f"node {i} leaf {tree.weight[i]!r}")
            else:
                lines.append(
                    f"node {i} split {tree.feature[i]} {tree.threshold[i]!r} "
                    f"{tree.left[i]} {tree.right[i]}"
                )
    lines.append("end")
    return "\n".join(lines) + "\n"


def load_model(text: str) -> BoostModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _FORMAT_TAG:
        raise ValueError(f"not a {_FORMAT_TAG!r} file")
    if lines[-1] != "end":
        raise ValueError("truncated model file")
    kv = dict(item.split("=", 1) for item in lines[1].removeprefix("params ").split())
    params = BoostParams(
        iterations=int(kv["iterations"]),
        max_depth=int(kv["max_depth"]),
        shrinkage=float(kv["shrinkage"]),
        bag_fraction=float(kv["bag_fraction"]),
        min_child_weight=float(kv["min_child_weight"]),
        rng_seed=int(kv["rng_seed"]),
    )
    names = tuple(lines[2].removeprefix("features ").split())
    trees: list[Tree] = []
    tree: Tree | None = None
    for ln in lines[3:-1]:
        parts = ln.split()
        if parts[0] == "tree":
            tree = Tree()
            trees.append(tree)
        elif parts[0] == "node" and tree is not None:
            if parts[2] == "leaf":
                tree.add_leaf(float(parts[3]))
            else:
                node = tree.add_split(int(parts[3]), float(parts[4]))
                tree.left[node] = int(parts[5])
                tree.right[node] = int(parts[6])
        else:
            raise ValueError(f"unexpected line in model file: {ln!r}")
    return BoostModel(trees, params, names)


def save_model(model: BoostModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_model(model))


def read_model(path) -> BoostModel:
    with open(path) as fh:
        return load_model(fh.read())
