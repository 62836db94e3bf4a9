"""Command-line interface.

    proxyeb simulate table2 --m 25,50 --reps 1000 --seed 7 --format markdown
    proxyeb estimate areas.csv --method npeb2
    proxyeb risk-scan areas.csv --transforms identity,ols,shift:x1 --method npeb

Exit status is 0 on success, 2 for configuration errors and 3 for data errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import replace

import numpy as np

from .io import load_config, read_dataset_csv
from .model import ConfigError, DataError, EstimatorKind, Rule
from .risk import select_transform
from .simulation import PRESETS, MethodSpec, Recipe, estimate_proportions, preset
from .transforms import arcsin_forward

EXIT_CONFIG = 2
EXIT_DATA = 3

ESTIMATE_METHODS = ("naive", "reg", "peb", "npeb0", "npeb1", "npeb2", "select")


def _int_list(text):
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proxyeb", description="Empirical Bayes estimation with covariate proxies")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario and print its risk table")
    sim.add_argument("target", help=f"preset ({'|'.join(sorted(PRESETS))}) or path to a JSON config")
    sim.add_argument("--seed", type=_u64)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--m", type=_int_list, help="comma-separated sample sizes")
    sim.add_argument("--method", help="comma-separated method labels to keep")
    sim.add_argument("--bandwidth", type=float)
    sim.add_argument("--truncate", action="store_true")
    sim.add_argument("--workers", type=int)
    sim.add_argument("--format", choices=("csv", "markdown"), default="csv")
    sim.add_argument("--out")

    est = sub.add_parser("estimate", help="estimate area proportions from a dataset CSV")
    est.add_argument("data")
    est.add_argument("--method", default="npeb2", choices=ESTIMATE_METHODS)
    est.add_argument("--m", type=int, help="base sample size for pooled covariate counts")
    est.add_argument("--covariate-pool", type=_int_list,
                     help="treat covariate columns as counts over POOL*m trials (one pool per column)")
    est.add_argument("--shift-by", help="covariate used by npeb2 (default: first column)")
    est.add_argument("--bandwidth", type=float, default=0.4)
    est.add_argument("--truncate", action="store_true")
    est.add_argument("--out")

    scan = sub.add_parser("risk-scan", help="estimated risk of each candidate transform")
    scan.add_argument("data")
    scan.add_argument("--transforms", default="identity,ols",
                      help="comma-separated recipes: identity, ols, shift:<col>, shift:0.3*<a>+0.7*<b>")
    scan.add_argument("--method", default="npeb", choices=("npeb", "peb", "naive", "regression"))
    scan.add_argument("--m", type=int)
    scan.add_argument("--covariate-pool", type=_int_list)
    scan.add_argument("--bandwidth", type=float, default=0.4)
    scan.add_argument("--format", choices=("csv", "markdown"), default="csv")
    scan.add_argument("--out")
    return parser


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _simulate(args) -> None:
    if args.target in PRESETS:
        cfg = preset(args.target, 0.4 if args.bandwidth is None else args.bandwidth, args.truncate)
    elif os.path.exists(args.target):
        cfg = load_config(args.target)
        if args.bandwidth is not None or args.truncate:
            methods = tuple(
                replace(mth, estimator=EstimatorKind.npeb(args.bandwidth or mth.estimator.bandwidth,
                                                          args.truncate or mth.estimator.truncate))
                if mth.estimator.tag is Rule.NPEB else mth
                for mth in cfg.methods
            )
            cfg = replace(cfg, methods=methods)
    else:
        raise ConfigError(f"unknown preset {args.target!r} (and no such config file); "
                          f"expected one of {sorted(PRESETS)}")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["replications"] = args.reps
    if args.m is not None:
        changes["m_values"] = args.m
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.method:
        wanted = [w.strip().lower() for w in args.method.split(",") if w.strip()]
        by_label = {mth.label.lower(): mth for mth in cfg.methods}
        missing = [w for w in wanted if w not in by_label]
        if missing:
            raise ConfigError(f"unknown method {missing[0]!r}; available: {[m.label for m in cfg.methods]}")
        changes["methods"] = tuple(by_label[w] for w in wanted)
    if changes:
        cfg = replace(cfg, **changes)
    from .simulation import run_scenario

    table = run_scenario(cfg)
    _emit(table.to_markdown() if args.format == "markdown" else table.to_csv(), args.out)


def _normal_scale(data, args):
    """Stabilized responses and named covariates for a dataset."""
    sizes = data.sample_sizes
    y = arcsin_forward(data.counts, sizes)
    base = sizes if args.m is None else args.m
    cov = {}
    pools = args.covariate_pool
    if pools is not None:
        if len(pools) == 1:
            pools = pools * data.p
        if len(pools) != data.p:
            raise ConfigError(f"--covariate-pool has {len(pools)} entries for {data.p} covariates")
    for j, name in enumerate(data.covariate_names):
        col = data.covariates[:, j]
        if pools is not None:
            if np.any(col != np.round(col)):
                raise DataError(f"covariate {name!r} is not an integer count")
            col = arcsin_forward(col.astype(np.int64), base, pools[j])
        cov[name] = col
    design = np.column_stack([np.ones(data.n)] + [cov[k] for k in data.covariate_names])
    return y, cov, design


def _estimate_method(args, names) -> MethodSpec:
    npeb = EstimatorKind.npeb(args.bandwidth, args.truncate)
    if args.method in ("reg", "peb", "npeb1", "npeb2", "select") and not names:
        raise DataError(f"method {args.method} needs at least one covariate column")
    if args.method == "naive":
        return MethodSpec("naive", EstimatorKind.naive())
    if args.method == "reg":
        return MethodSpec("reg", EstimatorKind.regression(), Recipe("ols"))
    if args.method == "peb":
        return MethodSpec("peb", EstimatorKind.peb(), Recipe("ols"))
    if args.method == "npeb0":
        return MethodSpec("npeb0", npeb, Recipe("identity"))
    if args.method == "npeb1":
        return MethodSpec("npeb1", npeb, Recipe("ols"))
    if args.method == "npeb2":
        col = args.shift_by or names[0]
        if col not in names:
            raise ConfigError(f"--shift-by {col!r} is not a covariate column; have {list(names)}")
        return MethodSpec("npeb2", npeb, Recipe("shift", ((col, 1.0),)))
    opts = [Recipe("identity"), Recipe("ols")] + [Recipe("shift", ((n, 1.0),)) for n in names]
    return MethodSpec("select", npeb, Recipe("select", options=tuple(opts)))


def _estimate(args) -> None:
    data = read_dataset_csv(args.data)
    y, cov, design = _normal_scale(data, args)
    method = _estimate_method(args, data.covariate_names)
    p_hat = estimate_proportions(method, data.counts, data.sample_sizes, y, cov, design)

    log = sys.stderr
    log.write(f"# method={method.label} estimator={method.estimator} recipe={method.recipe} n={data.n}\n")
    if method.estimator.tag is not Rule.NAIVE:
        report = select_transform(method.recipe.candidates(cov, design), y, method.estimator)
        for k, e in enumerate(report.entries):
            mark = " *" if k == report.selected else ""
            log.write(f"# risk[{e.transform_id}] = {e.risk:.4f} (raw {e.raw_risk:.4f}){mark}\n")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["area_id", "p_hat"])
    for aid, p in zip(data.area_ids, p_hat):
        w.writerow([aid, f"{p:.10f}"])
    _emit(buf.getvalue(), args.out)


def _risk_scan(args) -> None:
    data = read_dataset_csv(args.data)
    y, cov, design = _normal_scale(data, args)
    est = EstimatorKind.npeb(args.bandwidth) if args.method == "npeb" else EstimatorKind(Rule(args.method))
    recipes = [Recipe.parse(t) for t in args.transforms.split(",") if t.strip()]
    if not recipes:
        raise ConfigError("no transforms given")
    report = select_transform(Recipe("select", options=tuple(recipes)).candidates(cov, design), y, est)
    rows = [(e.transform_id, str(e.estimator), f"{e.risk:.6f}", f"{e.raw_risk:.6f}", int(k == report.selected))
            for k, e in enumerate(report.entries)]
    head = ("transform_id", "estimator", "risk", "raw_risk", "selected")
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(head)
        w.writerows(rows)
        text = buf.getvalue()
    else:
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        lines += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {"simulate": _simulate, "estimate": _estimate, "risk-scan": _risk_scan}[args.command]
    try:
        handler(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except DataError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except OSError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    return 0


def main() -> None:
    sys.exit(run())
