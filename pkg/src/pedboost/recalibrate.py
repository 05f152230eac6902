"""Prediction updaters that do not see new features: Platt scaling and
isotonic regression. Both are fit on training predictions and applied to
test predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_CLAMP = 1e-7  # keeps logits finite when a model outputs exactly 0 or 1


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return np.log(p / (1.0 - p))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # saturated logits give exact 0/1
        return 1.0 / (1.0 + np.exp(-z))


@dataclass(frozen=True)
class PlattRecalibrator:
    """p' = sigmoid(slope * logit(p) + intercept)."""

    slope: float
    intercept: float


class PlattFitError(RuntimeError):
    pass


def platt_fit(predictions: np.ndarray, labels: np.ndarray,
              max_iter: int = 100, tol: float = 1e-10) -> PlattRecalibrator:
    """Maximum-likelihood logistic map on the logit of the predictions.

    Newton-Raphson until the gradient norm drops below tol. Degenerate
    designs (single-class labels, constant predictions, separation) raise
    PlattFitError.
    """
    y = np.asarray(labels, dtype=float)
    if y.min() == y.max():
        raise PlattFitError("labels contain a single class")
    x = _logit(predictions)
    if x.min() == x.max():
        raise PlattFitError("constant predictions: slope unidentifiable")
    design = np.column_stack([x, np.ones_like(x)])
    beta = np.zeros(2)
    for _ in range(max_iter):
        p = _sigmoid(design @ beta)
        grad = design.T @ (p - y)
        if np.linalg.norm(grad) < tol:
            return PlattRecalibrator(slope=float(beta[0]), intercept=float(beta[1]))
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise PlattFitError("singular Hessian: slope unidentifiable") from None
        beta = beta - step
        if not np.isfinite(beta).all():
            raise PlattFitError("diverged (complete separation?)")
    raise PlattFitError(f"no convergence in {max_iter} Newton iterations")


def platt_apply(recal: PlattRecalibrator, predictions: np.ndarray) -> np.ndarray:
    return _sigmoid(recal.slope * _logit(predictions) + recal.intercept)


@dataclass(frozen=True)
class IsotonicRecalibrator:
    """Right-continuous nondecreasing step function on raw predictions."""

    breakpoints: np.ndarray  # sorted distinct training predictions
    values: np.ndarray       # fitted value at each breakpoint, nondecreasing


def isotonic_fit(predictions: np.ndarray, labels: np.ndarray) -> IsotonicRecalibrator:
    """Least-squares nondecreasing fit by pool-adjacent-violators.

    Tied predictions are merged into one weighted block before pooling, so
    the fitted function is single-valued everywhere.
    """
    p = np.asarray(predictions, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.size == 0:
        raise ValueError("need at least one sample")
    order = np.argsort(p, kind="stable")
    p_sorted, y_sorted = p[order], y[order]
    breaks, start = [], 0
    block_mean, block_weight = [], []
    for i in range(1, p.size + 1):
        if i == p.size or p_sorted[i] != p_sorted[start]:
            breaks.append(p_sorted[start])
            block_mean.append(y_sorted[start:i].mean())
            block_weight.append(float(i - start))
            start = i

    # pool adjacent violators: merge while the running mean decreases
    means: list[float] = []
    weights: list[float] = []
    counts: list[int] = []  # how many breakpoints each pooled block spans
    for mean, weight in zip(block_mean, block_weight):
        means.append(mean)
        weights.append(weight)
        counts.append(1)
        while len(means) > 1 and means[-2] >= means[-1]:
            w = weights[-2] + weights[-1]
            m = (means[-2] * weights[-2] + means[-1] * weights[-1]) / w
            means[-2:] = [m]
            weights[-2:] = [w]
            counts[-2:] = [counts[-2] + counts[-1]]

    values = np.repeat(means, counts)
    return IsotonicRecalibrator(breakpoints=np.asarray(breaks), values=values)


def isotonic_apply(recal: IsotonicRecalibrator, predictions: np.ndarray) -> np.ndarray:
    """Step interpolation; inputs beyond the training range take the end values."""
    idx = np.searchsorted(recal.breakpoints, np.asarray(predictions, dtype=float), side="right") - 1
    return recal.values[np.clip(idx, 0, len(recal.values) - 1)]
