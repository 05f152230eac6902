"""Command-line interface.

Subcommands: simulate, score, fit, evaluate, experiment, oracle-check.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from . import _kernels
from .booster import BoostParams, fit as boost_fit, predict as boost_predict, read_model, save_model
from .evaluation import METRICS, compute_metrics
from .experiment import default_config, list_models, load_config, run, write_csvs
from .mendelian import MendelianModel
from .pedigree import read_pedigree_csv, write_pedigree_csv
from .penetrance import (
    DEFAULT_CANCERS,
    DEFAULT_GENES,
    NONCARRIER,
    AlleleFrequencies,
    default_frequencies,
    default_tables,
    misspecify,
    read_penetrance_csv,
    write_penetrance_csv,
)
from .oracle import oracle_check
from .simulator import SimulationScenario, simulate


def _cmd_simulate(args) -> int:
    tables = default_tables(args.scenario, args.gastric)
    scenario = SimulationScenario(
        n_families=args.families, tables=tables,
        freqs=default_frequencies(q=args.allele_frequency), rng_seed=args.seed,
    )
    families = simulate(scenario)
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    ped_path = os.path.join(args.out_dir, "pedigrees.csv")
    truth_path = os.path.join(args.out_dir, "truth.csv")
    write_pedigree_csv(ped_path, [f.pedigree for f in families], DEFAULT_CANCERS)
    with open(truth_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["counselee_id", "carrier"] + [f"state_{g}" for g in DEFAULT_GENES])
        for f in families:
            w.writerow([f.pedigree.counselee_id, int(f.is_carrier)] + list(f.counselee_genotype))
    write_penetrance_csv(os.path.join(args.out_dir, "penetrance.csv"), tables)
    print(f"wrote {len(families)} families to {ped_path}")
    return 0


def _cmd_score(args) -> int:
    if args.penetrance:
        tables = read_penetrance_csv(args.penetrance)
    else:
        tables = default_tables(args.scenario, args.gastric)
    for item in args.exclude:
        tables.pop(item, None)
    for item in args.exponent:
        cancer, _, value = item.partition("=")
        if cancer not in tables:
            print(f"error: --exponent for unknown cancer {cancer!r}", file=sys.stderr)
            return 2
        tables[cancer] = misspecify(tables[cancer], float(value))

    genes = sorted({
        key for t in tables.values() for (_, key) in t.densities if key != NONCARRIER
    })
    freq = {g: args.allele_frequency for g in genes}
    for item in args.freq:
        gene, _, value = item.partition("=")
        freq[gene] = float(value)
    engine = MendelianModel(tables, AlleleFrequencies(freq), genes)

    pedigrees = read_pedigree_csv(args.pedigrees)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["counselee_id", "carrier_probability"])
        for ped in pedigrees:
            w.writerow([ped.counselee_id, repr(engine.carrier_probability(ped))])
    print(f"scored {len(pedigrees)} families -> {args.out}")
    return 0


def _read_table(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return reader.fieldnames or [], rows


def _cmd_fit(args) -> int:
    header, rows = _read_table(args.train)
    if "label" not in header:
        print("error: training CSV needs a 'label' column", file=sys.stderr)
        return 2
    feature_names = [c for c in header if c not in ("label", "init_score")]
    y = np.array([float(r["label"]) for r in rows])
    x = np.array([[float(r[c]) for c in feature_names] for r in rows])
    if "init_score" in header:
        init = np.array([float(r["init_score"]) for r in rows])
    else:
        ybar = y.mean()
        init = np.full(y.size, np.log(ybar / (1 - ybar)))
    params = BoostParams(
        iterations=args.iterations, max_depth=args.max_depth, shrinkage=args.shrinkage,
        bag_fraction=args.bag_fraction, min_child_weight=args.min_child_weight,
        rng_seed=args.seed,
    )
    model = boost_fit(x, y, init, params, feature_names)
    save_model(model, args.out)
    train_probs = boost_predict(model, x, init)
    print(f"fit {len(model.trees)} trees on {y.size} rows -> {args.out} "
          f"(training O/E {y.sum() / train_probs.sum():.4f})")
    return 0


def _cmd_evaluate(args) -> int:
    header, rows = _read_table(args.predictions)
    for col in ("label", "prediction"):
        if col not in header:
            print(f"error: predictions CSV needs a {col!r} column", file=sys.stderr)
            return 2
    y = np.array([float(r["label"]) for r in rows])
    p = np.array([float(r["prediction"]) for r in rows])
    report = compute_metrics(y, p, with_deciles=args.deciles is not None)
    for metric in METRICS:
        print(f"{metric} {report.value(metric)!r}")
    if args.deciles is not None:
        with open(args.deciles, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "mean_pred", "obs_frac", "n", "ci_lo", "ci_hi"])
            for d in report.deciles:
                w.writerow([d.bin, repr(d.mean_pred), repr(d.obs_frac), d.n, repr(d.ci_lo), repr(d.ci_hi)])
        print(f"deciles -> {args.deciles}")
    return 0


def _cmd_experiment(args) -> int:
    overrides = {}
    for key, value in (
        ("seed", args.seed), ("threads", args.threads), ("n_families", args.families),
        ("n_datasets", args.datasets), ("n_replicates", args.replicates),
    ):
        if value is not None:
            overrides[key] = value
    if args.config:
        config = load_config(args.config, **overrides)
    else:
        numbers = tuple(args.models.replace(",", " ").split())
        config = default_config(numbers, BoostParams(), **overrides)
    if args.list:
        print(list_models(config), end="")
        return 0
    t0 = time.time()
    result = run(config)
    paths = write_csvs(result, args.out_dir)
    print(f"experiment finished in {time.time() - t0:.1f}s "
          f"({config.n_datasets} datasets x {config.n_families} families, kernel={_kernels.BACKEND})")
    for name, path in paths.items():
        print(f"  {name}: {path}")
    return 0


def _cmd_oracle_check(args) -> int:
    t0 = time.time()
    result = oracle_check(n_cases=args.cases, seed=args.seed,
                          max_members=args.max_members, n_genes=args.genes)
    status = "ok" if result.ok else "FAIL"
    print(f"oracle-check {status}: {result.cases} pedigrees, "
          f"max |peeling - brute force| = {result.max_abs_diff:.3e} "
          f"({time.time() - t0:.1f}s, kernel={_kernels.BACKEND})")
    if not result.ok:
        print(f"failing cases: {list(result.failures)}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pedboost")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate families and write pedigree/truth CSVs")
    p.add_argument("--families", type=int, default=1000)
    p.add_argument("--scenario", choices=("low", "high"), default="low")
    p.add_argument("--gastric", choices=("low", "high"), default="high")
    p.add_argument("--allele-frequency", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("score", help="carrier probabilities for a pedigree CSV")
    p.add_argument("--pedigrees", required=True)
    p.add_argument("--penetrance", help="penetrance CSV; defaults to built-in tables")
    p.add_argument("--scenario", choices=("low", "high"), default="low")
    p.add_argument("--gastric", choices=("low", "high"), default="high")
    p.add_argument("--exclude", action="append", default=[], metavar="CANCER")
    p.add_argument("--exponent", action="append", default=[], metavar="CANCER=EXP",
                   help="misspecify a cancer's survival by this exponent")
    p.add_argument("--freq", action="append", default=[], metavar="GENE=Q")
    p.add_argument("--allele-frequency", type=float, default=0.01)
    p.add_argument("--out", default="scores.csv")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("fit", help="train a boosted model from a training CSV")
    p.add_argument("--train", required=True,
                   help="CSV with 'label', optional 'init_score', and feature columns")
    p.add_argument("--out", default="model.txt")
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--max-depth", type=int, default=2)
    p.add_argument("--shrinkage", type=float, default=0.1)
    p.add_argument("--bag-fraction", type=float, default=0.5)
    p.add_argument("--min-child-weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("evaluate", help="metrics for a label/prediction CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--deciles", help="also write a decile calibration CSV here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="run a full scenario experiment")
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--models", default="1 2 3 4 5 6 7 8 9 10")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--threads", type=int)
    p.add_argument("--families", type=int)
    p.add_argument("--datasets", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--list", action="store_true", help="print the resolved model table and exit")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("oracle-check", help="peeling vs brute-force enumeration")
    p.add_argument("--cases", type=int, default=200)
    p.add_argument("--seed", type=int, default=20240)
    p.add_argument("--max-members", type=int, default=5)
    p.add_argument("--genes", type=int, default=2)
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
