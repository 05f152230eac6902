"""Declarative experiment engine: model matrix, datasets, validation, CSVs.

A model spec says how carrier probabilities are produced: a Mendelian model
with a per-cancer penetrance configuration (include/exclude plus a survival
exponent, where exponent 1 means correctly specified and anything else is a
deliberate misspecification), a boosted model cold-started from the sample
log odds, a boosted model initialized from a Mendelian model's predictions,
or Platt/isotonic updates of a Mendelian model. An experiment simulates
datasets, scores every family under every distinct Mendelian configuration
once, then runs the validation scheme over the model list and aggregates.

Reruns are byte-identical for a fixed seed: every random stream is derived
from (seed, dataset index, ...) so results do not depend on worker count.
"""

from __future__ import annotations

import configparser
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .booster import (
    BoostParams,
    default_init,
    extract_features_batch,
    fit as boost_fit,
    predict as boost_predict,
    prob_to_score,
)
from .evaluation import (
    METRICS,
    AggregateStat,
    CVRun,
    EvalModel,
    aggregate,
    bootstrap_validate,
    evaluate_models,
    monte_carlo_cv,
)
from .mendelian import MendelianModel
from .penetrance import (
    DEFAULT_CANCERS,
    DEFAULT_GENES,
    COLORECTAL,
    ENDOMETRIAL,
    GASTRIC,
    default_frequencies,
    default_tables,
    misspecify,
)
from .recalibrate import isotonic_apply, isotonic_fit, platt_apply, platt_fit
from .simulator import SimulationScenario, simulate

MENDELIAN = "mendelian"
GB = "gb"
GB_WITH_MENDELIAN = "gb_with_mendelian"
PLATT_ON = "platt_on"
ISOTONIC_ON = "isotonic_on"

KINDS = (MENDELIAN, GB, GB_WITH_MENDELIAN, PLATT_ON, ISOTONIC_ON)


@dataclass(frozen=True)
class PenUse:
    """How one cancer enters a Mendelian model's likelihood."""

    cancer: str
    exponent: float = 1.0

    def __post_init__(self):
        if self.exponent <= 0:
            raise ValueError("survival exponent must be positive")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    kind: str
    penetrance: tuple[PenUse, ...] = ()      # cancers entering the Mendelian likelihood
    features: tuple[str, ...] = ()           # cancers entering the boosted trees
    boost: BoostParams | None = None
    base: str | None = None                  # Mendelian spec the updater starts from
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind in (GB_WITH_MENDELIAN, PLATT_ON, ISOTONIC_ON) and self.base is None:
            raise ValueError(f"model {self.model_id}: kind {self.kind} needs a base model")
        if self.kind in (GB, GB_WITH_MENDELIAN) and (self.boost is None or not self.features):
            raise ValueError(f"model {self.model_id}: boosted kinds need boost params and features")

    @property
    def pen_key(self) -> tuple:
        return tuple(sorted((p.cancer, p.exponent) for p in self.penetrance))


def standard_models(boost: BoostParams = BoostParams()) -> dict[str, ModelSpec]:
    """The numbered model matrix used throughout the experiments.

    1-3 use misspecified colorectal/endometrial penetrances (survival
    exponent 0.5) without gastric information; 4-6 add gastric; 7-8 are the
    correctly-specified references; 9-10 are recalibration updates of model
    1; 11-14 vary the iteration count; 15-18 sweep the gastric exponent.
    """
    mis = (PenUse(COLORECTAL, 0.5), PenUse(ENDOMETRIAL, 0.5))
    cor = (PenUse(COLORECTAL), PenUse(ENDOMETRIAL))
    gc = (PenUse(GASTRIC),)
    two = (COLORECTAL, ENDOMETRIAL)
    three = DEFAULT_CANCERS
    m = {
        "1": ModelSpec("1", MENDELIAN, mis, label="Mendelian, misspecified CRC/EC, no GC"),
        "2": ModelSpec("2", GB, features=two, boost=boost, label="GB from sample log odds, CRC+EC"),
        "3": ModelSpec("3", GB_WITH_MENDELIAN, features=two, boost=boost, base="1",
                       label="GB from model 1, CRC+EC"),
        "4": ModelSpec("4", MENDELIAN, mis + gc, label="Mendelian, misspecified CRC/EC, with GC"),
        "5": ModelSpec("5", GB, features=three, boost=boost, label="GB from sample log odds, 3 cancers"),
        "6": ModelSpec("6", GB_WITH_MENDELIAN, features=three, boost=boost, base="1",
                       label="GB from model 1, 3 cancers"),
        "7": ModelSpec("7", MENDELIAN, cor, label="Mendelian, correct CRC/EC, no GC"),
        "8": ModelSpec("8", MENDELIAN, cor + gc, label="Mendelian, correct CRC/EC, with GC"),
        "9": ModelSpec("9", PLATT_ON, base="1", label="Platt scaling of model 1"),
        "10": ModelSpec("10", ISOTONIC_ON, base="1", label="Isotonic regression of model 1"),
    }
    for num, base_num, iters in (("11", "6", 25), ("12", "6", 100), ("13", "5", 25), ("14", "5", 100)):
        src = m[base_num]
        m[num] = replace(src, model_id=num, boost=replace(boost, iterations=iters),
                         label=f"{src.label}, {iters} iterations")
    for num, exp in (("15", 0.25), ("16", 0.5), ("17", 2.0), ("18", 4.0)):
        m[num] = ModelSpec(num, MENDELIAN, mis + (PenUse(GASTRIC, exp),),
                           label=f"Mendelian, misspecified CRC/EC, GC exponent {exp}")
    return m


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple[ModelSpec, ...]
    baseline: str = "1"
    train_scenario: str = "low"
    test_scenario: str = "low"
    gastric_signal: str = "high"
    n_datasets: int = 5
    n_families: int = 2000
    n_replicates: int = 20
    validation: str = "mc_cv"          # or "bootstrap"
    n_boot: int = 50
    seed: int = 0
    threads: int = 1
    oe_rule: str = "log"
    deciles_dataset: int = 0

    def __post_init__(self):
        ids = [m.model_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate model ids")
        if self.models and self.baseline not in ids:
            raise ValueError(f"baseline {self.baseline!r} not among models")
        by_id = {m.model_id: m for m in self.models}
        for spec in self.models:
            if spec.base is not None:
                if spec.base not in by_id:
                    raise ValueError(f"model {spec.model_id}: base {spec.base!r} not among models")
                if by_id[spec.base].kind != MENDELIAN:
                    raise ValueError(f"model {spec.model_id}: base must be a Mendelian model")
        for name in (self.train_scenario, self.test_scenario):
            if name not in ("low", "high"):
                raise ValueError(f"unknown scenario {name!r}")
        if self.validation not in ("mc_cv", "bootstrap"):
            raise ValueError(f"unknown validation scheme {self.validation!r}")
        if self.validation == "bootstrap" and self.train_scenario != self.test_scenario:
            raise ValueError("bootstrap validation does not support distinct train/test scenarios")

    @property
    def transport(self) -> bool:
        return self.train_scenario != self.test_scenario


def default_config(model_numbers: Sequence[str] = tuple("12345678") + ("9", "10"),
                   boost: BoostParams = BoostParams(), **kwargs) -> ExperimentConfig:
    table = standard_models(boost)
    missing = [n for n in model_numbers if n not in table]
    if missing:
        raise ValueError(f"unknown model numbers {missing}; known: 1..18")
    return ExperimentConfig(models=tuple(table[n] for n in model_numbers), **kwargs)


# -- one dataset ----------------------------------------------------------------


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1, np.uint64)[0])


@dataclass
class _Pool:
    """One simulated family pool: labels, features, Mendelian scores."""

    labels: np.ndarray
    features: np.ndarray                     # columns follow DEFAULT_CANCERS
    scores: dict[tuple, np.ndarray] = field(default_factory=dict)


def _model_tables(pen_key: tuple, dg_tables: Mapping) -> dict:
    """Evaluation tables for one Mendelian configuration.

    Exponents transform the data-generating survival curves of the training
    scenario; excluded cancers simply drop out of the likelihood.
    """
    return {cancer: misspecify(dg_tables[cancer], exponent) for cancer, exponent in pen_key}


def _simulate_pool(scenario_name: str, gastric_signal: str, n_families: int, seed: int,
                   pen_keys: Sequence[tuple], model_tables: Mapping[tuple, Mapping]) -> _Pool:
    tables = default_tables(scenario_name, gastric_signal)
    families = simulate(SimulationScenario(
        n_families=n_families, tables=tables, freqs=default_frequencies(), rng_seed=seed,
    ))
    peds = [f.pedigree for f in families]
    restrictions = {c: t.sex_specific for c, t in tables.items()}
    pool = _Pool(
        labels=np.array([f.is_carrier for f in families], dtype=float),
        features=extract_features_batch(peds, DEFAULT_CANCERS, restrictions),
    )
    for key in pen_keys:
        engine = MendelianModel(model_tables[key], default_frequencies(), DEFAULT_GENES)
        pool.scores[key] = engine.score(peds)
    return pool


def _feature_columns(cancers: Sequence[str]) -> list[int]:
    return [DEFAULT_CANCERS.index(c) for c in cancers]


def _build_eval_models(config: ExperimentConfig, train: _Pool, test: _Pool,
                       dataset_seed: int) -> list[EvalModel]:
    by_id = {m.model_id: m for m in config.models}
    models = []
    for spec in config.models:
        models.append(_eval_model(spec, by_id, train, test, dataset_seed))
    return models


def _eval_model(spec: ModelSpec, by_id: Mapping[str, ModelSpec], train: _Pool,
                test: _Pool, dataset_seed: int) -> EvalModel:
    if spec.kind == MENDELIAN:
        scores = test.scores[spec.pen_key]
        return EvalModel(spec.model_id, lambda tr, te: scores[te], trainable=False)

    if spec.kind in (PLATT_ON, ISOTONIC_ON):
        base_key = by_id[spec.base].pen_key
        train_scores, test_scores = train.scores[base_key], test.scores[base_key]

        def run_recal(tr, te, _fit=spec.kind == PLATT_ON):
            if _fit:
                recal = platt_fit(train_scores[tr], train.labels[tr])
                return platt_apply(recal, test_scores[te])
            recal = isotonic_fit(train_scores[tr], train.labels[tr])
            return isotonic_apply(recal, test_scores[te])

        return EvalModel(spec.model_id, run_recal, trainable=True)

    # boosted kinds
    cols = _feature_columns(spec.features)
    x_train, x_test = train.features[:, cols], test.features[:, cols]
    if spec.kind == GB_WITH_MENDELIAN:
        base_key = by_id[spec.base].pen_key
        init_train = prob_to_score(train.scores[base_key])
        init_test = prob_to_score(test.scores[base_key])
    else:
        base_key = None
        init_train = init_test = None
    # tag by substance, not id: structurally identical specs must produce
    # identical predictions
    b = spec.boost
    substance = (f"{spec.kind}|{','.join(spec.features)}|{base_key}|"
                 f"{b.iterations},{b.max_depth},{b.shrinkage!r},{b.bag_fraction!r},"
                 f"{b.min_child_weight!r}")
    model_tag = zlib.crc32(substance.encode())

    def run_gb(tr, te):
        # seed from the training rows: deterministic, schedule-independent,
        # distinct across replicates and bootstrap resamples
        fit_seed = _derived_seed(dataset_seed, model_tag,
                                 zlib.crc32(np.asarray(tr, dtype=np.int64).tobytes()))
        params = replace(spec.boost, rng_seed=fit_seed)
        if init_train is None:
            init_tr = np.full(len(tr), default_init(train.labels[tr]))
            init_te = np.full(len(te), init_tr[0])
        else:
            init_tr, init_te = init_train[tr], init_test[te]
        booster = boost_fit(x_train[tr], train.labels[tr], init_tr, params, spec.features)
        return boost_predict(booster, x_test[te], init_te)

    return EvalModel(spec.model_id, run_gb, trainable=True)


@dataclass
class DatasetResult:
    dataset: int
    replicate_values: dict[str, dict[str, np.ndarray]]   # model -> metric -> per-replicate
    mean_values: dict[str, dict[str, float]]             # model -> metric -> dataset mean
    decile_rows: list[tuple]
    resampled_splits: int = 0


def _run_dataset(config: ExperimentConfig, dataset: int) -> DatasetResult:
    pen_keys = sorted({m.pen_key for m in config.models if m.kind == MENDELIAN})
    train_dg = default_tables(config.train_scenario, config.gastric_signal)
    model_tables = {key: _model_tables(key, train_dg) for key in pen_keys}

    train_pool = _simulate_pool(config.train_scenario, config.gastric_signal,
                                config.n_families, _derived_seed(config.seed, dataset, 0),
                                pen_keys, model_tables)
    if config.transport:
        test_pool = _simulate_pool(config.test_scenario, config.gastric_signal,
                                   config.n_families, _derived_seed(config.seed, dataset, 1),
                                   pen_keys, model_tables)
    else:
        test_pool = train_pool

    dataset_seed = _derived_seed(config.seed, dataset, 2)
    models = _build_eval_models(config, train_pool, test_pool, dataset_seed)
    with_deciles = config.validation == "mc_cv" and dataset == config.deciles_dataset

    if config.validation == "bootstrap":
        run = bootstrap_validate(train_pool.labels, models, config.n_boot, dataset_seed)
        replicate_values = {
            m.name: {metric: np.array([run.estimates[m.name][metric]]) for metric in METRICS}
            for m in models
        }
        decile_rows: list[tuple] = []
        resampled = 0
    elif config.transport:
        cv = _transport_cv(config, models, train_pool, test_pool, dataset_seed, with_deciles)
        replicate_values = cv.metric_arrays()
        decile_rows = _collect_deciles(cv) if with_deciles else []
        resampled = cv.resampled_splits
    else:
        cv = monte_carlo_cv(train_pool.labels, models, config.n_replicates,
                            dataset_seed, with_deciles)
        replicate_values = cv.metric_arrays()
        decile_rows = _collect_deciles(cv) if with_deciles else []
        resampled = cv.resampled_splits

    mean_values = {
        model: {metric: float(np.nanmean(vals)) if np.isfinite(vals).any() else float("nan")
                for metric, vals in by_metric.items()}
        for model, by_metric in replicate_values.items()
    }
    return DatasetResult(dataset, replicate_values, mean_values, decile_rows, resampled)


def _transport_cv(config: ExperimentConfig, models: Sequence[EvalModel], train_pool: _Pool,
                  test_pool: _Pool, seed: int, with_deciles: bool) -> CVRun:
    """Half-sized training and testing sets drawn from separate pools."""
    n_train = train_pool.labels.size
    n_test = test_pool.labels.size
    run = CVRun(reports={m.name: [] for m in models}, n_replicates=config.n_replicates)
    for r in range(config.n_replicates):
        rng = np.random.default_rng(np.random.SeedSequence((seed, r)))
        for _ in range(101):
            tr = rng.permutation(n_train)[: n_train // 2]
            if 0.0 < train_pool.labels[tr].mean() < 1.0:
                break
            run.resampled_splits += 1
        else:
            raise ValueError(f"replicate {r}: no two-class training half")
        te = rng.permutation(n_test)[: n_test // 2]
        for name, report in evaluate_models(models, tr, te, test_pool.labels[te],
                                            with_deciles).items():
            run.reports[name].append(report)
    return run


def _collect_deciles(cv: CVRun) -> list[tuple]:
    rows = []
    for model, reports in cv.reports.items():
        for r, report in enumerate(reports):
            for d in report.deciles:
                rows.append((model, r, d.bin, d.mean_pred, d.obs_frac, d.n, d.ci_lo, d.ci_hi))
    return rows


# -- whole experiment -----------------------------------------------------------


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    datasets: list[DatasetResult]
    aggregate: dict[str, dict[str, AggregateStat]]
    unit_values: dict[str, dict[str, np.ndarray]]

    def raw_rows(self):
        for d in self.datasets:
            for model, by_metric in sorted(d.replicate_values.items(), key=_model_sort):
                for metric in METRICS:
                    for r, v in enumerate(by_metric[metric]):
                        yield (d.dataset, r, model, metric, float(v))


def _model_sort(item):
    key = item[0]
    return (0, int(key)) if key.isdigit() else (1, key)


def _dataset_job(args):
    config, dataset = args
    return _run_dataset(config, dataset)


def run(config: ExperimentConfig) -> ExperimentResult:
    """Run every dataset, then aggregate model-by-model.

    With several datasets the confidence intervals and improvement
    percentages compare per-dataset mean metrics; with a single dataset they
    compare per-replicate metrics.
    """
    jobs = [(config, d) for d in range(config.n_datasets)]
    if config.threads > 1 and config.n_datasets > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            datasets = list(pool.map(_dataset_job, jobs))
    else:
        datasets = [_dataset_job(j) for j in jobs]
    datasets.sort(key=lambda d: d.dataset)

    model_ids = [m.model_id for m in config.models]
    if config.n_datasets > 1:
        unit_values = {
            model: {
                metric: np.array([d.mean_values[model][metric] for d in datasets])
                for metric in METRICS
            }
            for model in model_ids
        }
    else:
        unit_values = datasets[0].replicate_values
    agg = aggregate(unit_values, config.baseline, config.oe_rule) if model_ids else {}
    return ExperimentResult(config, datasets, agg, unit_values)


def list_models(config: ExperimentConfig) -> str:
    """Human-readable table of the resolved model matrix."""
    headers = ["model", "kind", "penetrance (exponent)", "features", "iters", "base", "description"]
    rows = []
    for m in config.models:
        pen = " ".join(f"{p.cancer}^{p.exponent:g}" for p in m.penetrance) or "-"
        rows.append([
            m.model_id, m.kind, pen, " ".join(m.features) or "-",
            str(m.boost.iterations) if m.boost else "-", m.base or "-", m.label,
        ])
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


# -- CSV output -------------------------------------------------------------------


def write_csvs(result: ExperimentResult, out_dir) -> dict[str, str]:
    """raw metrics, aggregate table, and decile rows; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    raw_path = os.path.join(out_dir, "raw_metrics.csv")
    with open(raw_path, "w") as fh:
        fh.write("dataset,replicate,model,metric,value\n")
        for dataset, rep, model, metric, value in result.raw_rows():
            fh.write(f"{dataset},{rep},{model},{metric},{value!r}\n")
    paths["raw_metrics"] = raw_path

    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w") as fh:
        fh.write("model,metric,mean,ci_lo,ci_hi,improvement_pct\n")
        for model in sorted(result.aggregate, key=lambda k: _model_sort((k,))):
            for metric in METRICS:
                s = result.aggregate[model][metric]
                fh.write(f"{model},{metric},{s.mean!r},{s.ci_lo!r},{s.ci_hi!r},{s.improvement_pct!r}\n")
    paths["aggregate"] = agg_path

    dec_path = os.path.join(out_dir, "deciles.csv")
    with open(dec_path, "w") as fh:
        fh.write("model,replicate,bin,mean_pred,obs_frac,n,ci_lo,ci_hi\n")
        for d in result.datasets:
            for model, rep, b, mp, of, n, lo, hi in d.decile_rows:
                fh.write(f"{model},{rep},{b},{mp!r},{of!r},{n},{lo!r},{hi!r}\n")
    paths["deciles"] = dec_path
    return paths


# -- config file ------------------------------------------------------------------


def load_config(path, **overrides) -> ExperimentConfig:
    """Read an INI experiment file; keyword overrides win over file values."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    exp = parser["experiment"] if parser.has_section("experiment") else {}

    boost_kwargs = {}
    if parser.has_section("boost"):
        b = parser["boost"]
        for key, cast in (("iterations", int), ("max_depth", int), ("shrinkage", float),
                          ("bag_fraction", float), ("min_child_weight", float)):
            if key in b:
                boost_kwargs[key] = cast(b[key])
    boost = BoostParams(**boost_kwargs)

    numbers = tuple(exp.get("models", "1 2 3 4 5 6 7 8 9 10").replace(",", " ").split())
    kwargs = dict(
        baseline=exp.get("baseline", "1"),
        train_scenario=exp.get("train_scenario", "low"),
        test_scenario=exp.get("test_scenario", "low"),
        gastric_signal=exp.get("gastric_signal", "high"),
        n_datasets=int(exp.get("datasets", 5)),
        n_families=int(exp.get("families", 2000)),
        n_replicates=int(exp.get("replicates", 20)),
        validation=exp.get("validation", "mc_cv"),
        n_boot=int(exp.get("n_boot", 50)),
        seed=int(exp.get("seed", 0)),
        threads=int(exp.get("threads", 1)),
        oe_rule=exp.get("oe_rule", "log"),
    )
    kwargs.update(overrides)
    return default_config(numbers, boost, **kwargs)
