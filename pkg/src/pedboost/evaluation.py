"""Performance metrics and validation schemes for carrier-probability models.

Calibration is graded from coarse to fine: observed/expected ratio, then
intercept/slope of a logistic refit of outcomes on predicted log-odds
(targets 0 and 1), then a decile calibration table. Discrimination is the
area under the ROC curve, overall accuracy the root Brier score. Validation
is either repeated random half splits (Monte Carlo cross-validation) or the
optimism-corrected bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

METRICS = ("oe", "auc", "rbs", "cal_intercept", "cal_slope")

_Z95 = 1.959963984540054


def oe(labels: np.ndarray, predictions: np.ndarray) -> float:
    """Observed events over expected events; 1 is perfect mean calibration."""
    y = np.asarray(labels, dtype=float)
    p = np.asarray(predictions, dtype=float)
    expected = p.sum()
    if expected <= 0:
        raise ValueError("expected event count is zero")
    return float(y.sum() / expected)


def _average_ranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(a.size, dtype=float)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(labels: np.ndarray, predictions: np.ndarray) -> float:
    """Mann-Whitney AUC; tied predictions count half."""
    y = np.asarray(labels, dtype=float)
    p = np.asarray(predictions, dtype=float)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = _average_ranks(p)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def rbs(labels: np.ndarray, predictions: np.ndarray) -> float:
    """Root mean squared gap between outcomes and probabilities."""
    y = np.asarray(labels, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if y.size == 0:
        raise ValueError("need at least one sample")
    return float(np.sqrt(np.mean((y - p) ** 2)))


@dataclass(frozen=True)
class CalibrationResult:
    intercept: float
    slope: float
    ok: bool
    message: str = ""


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), 1e-7, 1.0 - 1e-7)
    return np.log(p / (1.0 - p))


def _logistic_newton(design: np.ndarray, y: np.ndarray, offset: np.ndarray,
                     max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    beta = np.zeros(design.shape[1])
    for _ in range(max_iter):
        eta = offset + design @ beta
        with np.errstate(over="ignore"):  # saturated etas give exact 0/1
            p = 1.0 / (1.0 + np.exp(-eta))
        grad = design.T @ (p - y)
        if np.linalg.norm(grad) < tol:
            return beta
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None])
        step = np.linalg.solve(hess, grad)  # raises LinAlgError when singular
        beta = beta - step
        if not np.isfinite(beta).all():
            raise FloatingPointError("logistic fit diverged")
    raise FloatingPointError(f"no convergence in {max_iter} iterations")


def calibration_intercept_slope(labels: np.ndarray, predictions: np.ndarray) -> CalibrationResult:
    """Weak-calibration summary.

    The slope comes from a logistic regression of outcomes on predicted
    log-odds with a free intercept; the intercept from a refit with the
    slope pinned at 1 (log-odds as offset). Degenerate inputs (constant
    predictions, separation) are flagged rather than raised.
    """
    y = np.asarray(labels, dtype=float)
    if y.min() == y.max():
        return CalibrationResult(np.nan, np.nan, False, "single-class labels")
    x = _logit(predictions)
    if x.min() == x.max():
        return CalibrationResult(np.nan, np.nan, False, "constant predictions: slope unidentifiable")
    ones = np.ones_like(x)
    try:
        slope = _logistic_newton(np.column_stack([ones, x]), y, np.zeros_like(x))[1]
        intercept = _logistic_newton(ones[:, None], y, x)[0]
    except (np.linalg.LinAlgError, FloatingPointError) as err:
        return CalibrationResult(np.nan, np.nan, False, str(err))
    return CalibrationResult(float(intercept), float(slope), True)


@dataclass(frozen=True)
class DecileRow:
    bin: int
    mean_pred: float
    obs_frac: float
    n: int
    ci_lo: float
    ci_hi: float


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    if n == 0:
        return (np.nan, np.nan)
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def decile_table(labels: np.ndarray, predictions: np.ndarray) -> list[DecileRow]:
    """Calibration table over prediction deciles.

    Bin edges are the prediction quantiles; duplicate edges are merged, so
    heavily tied predictions produce fewer than 10 rows. Values equal to an
    edge fall in the lower bin. Intervals are 95% Wilson.
    """
    y = np.asarray(labels, dtype=float)
    p = np.asarray(predictions, dtype=float)
    if p.size < 10:
        raise ValueError("decile table needs at least 10 samples")
    edges = np.unique(np.quantile(p, np.linspace(0.1, 0.9, 9)))
    bins = np.searchsorted(edges, p, side="left")
    rows = []
    for b in np.unique(bins):
        mask = bins == b
        n = int(mask.sum())
        events = int(y[mask].sum())
        lo, hi = wilson_interval(events, n)
        rows.append(DecileRow(int(b), float(p[mask].mean()), events / n, n, lo, hi))
    return rows


@dataclass(frozen=True)
class MetricReport:
    oe: float
    auc: float
    rbs: float
    cal_intercept: float
    cal_slope: float
    n: int
    n_events: int
    deciles: tuple[DecileRow, ...] = ()

    def value(self, metric: str) -> float:
        return getattr(self, metric)


def compute_metrics(labels: np.ndarray, predictions: np.ndarray,
                    with_deciles: bool = False) -> MetricReport:
    """All scalar metrics at once; undefined ones come back as NaN."""
    y = np.asarray(labels, dtype=float)
    p = np.asarray(predictions, dtype=float)
    try:
        auc_value = auc(y, p)
    except ValueError:
        auc_value = np.nan
    cal = calibration_intercept_slope(y, p)
    return MetricReport(
        oe=oe(y, p),
        auc=auc_value,
        rbs=rbs(y, p),
        cal_intercept=cal.intercept,
        cal_slope=cal.slope,
        n=y.size,
        n_events=int(y.sum()),
        deciles=tuple(decile_table(y, p)) if with_deciles and y.size >= 10 else (),
    )


# -- model comparison ---------------------------------------------------------

BETTER_RULES = {
    "oe": ("closer to 1 in |log|", lambda m, b: abs(np.log(m)) < abs(np.log(b))),
    "oe_abs": ("closer to 1 in |x-1|", lambda m, b: abs(m - 1) < abs(b - 1)),
    "auc": ("strictly larger", lambda m, b: m > b),
    "rbs": ("strictly smaller", lambda m, b: m < b),
    "cal_intercept": ("closer to 0", lambda m, b: abs(m) < abs(b)),
    "cal_slope": ("closer to 1", lambda m, b: abs(m - 1) < abs(b - 1)),
}


def improvement_pct(metric: str, values: np.ndarray, baseline: np.ndarray,
                    oe_rule: str = "log") -> float:
    """Percentage of units where the model strictly beats the baseline."""
    rule = BETTER_RULES["oe_abs" if metric == "oe" and oe_rule == "abs" else metric][1]
    v = np.asarray(values, dtype=float)
    b = np.asarray(baseline, dtype=float)
    usable = np.isfinite(v) & np.isfinite(b)
    if not usable.any():
        return np.nan
    wins = sum(bool(rule(m, bb)) for m, bb in zip(v[usable], b[usable]))
    return 100.0 * wins / usable.sum()


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    ci_lo: float
    ci_hi: float
    improvement_pct: float


def aggregate(values_by_model: Mapping[str, Mapping[str, np.ndarray]], baseline: str,
              oe_rule: str = "log") -> dict[str, dict[str, AggregateStat]]:
    """Mean, percentile 95% CI and improvement percentage per model/metric.

    values_by_model[model][metric] is the vector of per-unit values (units =
    replicates or datasets). The baseline's improvement against itself is 0
    by the strictness of every rule.
    """
    out: dict[str, dict[str, AggregateStat]] = {}
    base = values_by_model[baseline]
    for model, by_metric in values_by_model.items():
        out[model] = {}
        for metric, vals in by_metric.items():
            v = np.asarray(vals, dtype=float)
            finite = v[np.isfinite(v)]
            if finite.size == 0:
                out[model][metric] = AggregateStat(np.nan, np.nan, np.nan, np.nan)
                continue
            lo, hi = np.percentile(finite, [2.5, 97.5])
            ip = improvement_pct(metric, v, np.asarray(base[metric], dtype=float), oe_rule)
            out[model][metric] = AggregateStat(float(finite.mean()), float(lo), float(hi), ip)
    return out


# -- validation schemes --------------------------------------------------------


@dataclass(frozen=True)
class EvalModel:
    """A model under evaluation.

    run(train_idx, eval_idx) fits on the training rows (ignored when the
    model is not trainable) and returns probabilities for the eval rows.
    """

    name: str
    run: Callable[[np.ndarray, np.ndarray], np.ndarray]
    trainable: bool = True


@dataclass
class CVRun:
    reports: dict[str, list[MetricReport]]
    n_replicates: int
    resampled_splits: int = 0

    def values(self, metric: str, model: str) -> np.ndarray:
        return np.array([r.value(metric) for r in self.reports[model]])

    def metric_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        return {
            model: {metric: self.values(metric, model) for metric in METRICS}
            for model in self.reports
        }


def evaluate_models(models: Sequence[EvalModel], train_idx: np.ndarray,
                    eval_idx: np.ndarray, eval_labels: np.ndarray,
                    with_deciles: bool = False) -> dict[str, MetricReport]:
    out = {}
    for model in models:
        preds = model.run(train_idx, eval_idx)
        out[model.name] = compute_metrics(eval_labels, preds, with_deciles)
    return out


def monte_carlo_cv(labels: np.ndarray, models: Sequence[EvalModel], n_replicates: int,
                   seed: int, with_deciles: bool = False,
                   max_resample: int = 100) -> CVRun:
    """Repeated random half splits; fit on one half, score the other.

    A split whose training half is single-class is redrawn (and counted in
    resampled_splits) since trainable models cannot be fit on it.
    """
    y = np.asarray(labels, dtype=float)
    n = y.size
    if n < 2:
        raise ValueError("need at least two samples to split")
    run = CVRun(reports={m.name: [] for m in models}, n_replicates=n_replicates)
    for r in range(n_replicates):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        for attempt in range(max_resample + 1):
            perm = rng.permutation(n)
            train, test = perm[: n // 2], perm[n // 2:]
            if 0.0 < y[train].mean() < 1.0:
                break
            run.resampled_splits += 1
        else:
            raise ValueError(f"replicate {r}: no two-class training half in {max_resample} draws")
        for model, report in evaluate_models(models, train, test, y[test], with_deciles).items():
            run.reports[model].append(report)
    return run


@dataclass
class BootstrapRun:
    apparent: dict[str, MetricReport]
    estimates: dict[str, dict[str, float]]
    n_boot: int


def bootstrap_validate(labels: np.ndarray, models: Sequence[EvalModel], n_boot: int,
                       seed: int, max_resample: int = 100) -> BootstrapRun:
    """Optimism-corrected bootstrap, resampling whole families.

    estimate = apparent - mean_b(bootstrap_b - test_b), where bootstrap_b
    fits and evaluates on resample b and test_b evaluates that same fit on
    the full data. Models that never fit have zero optimism by construction,
    so their estimate is the apparent metric itself.
    """
    y = np.asarray(labels, dtype=float)
    n = y.size
    everyone = np.arange(n)
    apparent = evaluate_models(models, everyone, everyone, y)
    estimates: dict[str, dict[str, float]] = {}
    optimism: dict[str, dict[str, list[float]]] = {
        m.name: {metric: [] for metric in METRICS} for m in models if m.trainable
    }
    trainable = [m for m in models if m.trainable]
    if trainable and n_boot > 0:
        for b in range(n_boot):
            rng = np.random.default_rng(np.random.SeedSequence((seed, b)))
            for attempt in range(max_resample + 1):
                idx = rng.choice(n, size=n, replace=True)
                if 0.0 < y[idx].mean() < 1.0:
                    break
            else:
                raise ValueError(f"bootstrap {b}: no two-class resample in {max_resample} draws")
            boot = evaluate_models(trainable, idx, idx, y[idx])
            test = evaluate_models(trainable, idx, everyone, y)
            for m in trainable:
                for metric in METRICS:
                    optimism[m.name][metric].append(
                        boot[m.name].value(metric) - test[m.name].value(metric)
                    )
    for m in models:
        estimates[m.name] = {}
        for metric in METRICS:
            estimate = apparent[m.name].value(metric)
            if m.trainable and n_boot > 0:
                gaps = np.asarray(optimism[m.name][metric], dtype=float)
                gaps = gaps[np.isfinite(gaps)]
                if gaps.size:
                    estimate -= gaps.mean()
            estimates[m.name][metric] = float(estimate)
    return BootstrapRun(apparent=apparent, estimates=estimates, n_boot=n_boot)
