"""Command-line front end.

Subcommands print JSON (or CSV for ``bench``) to stdout or to ``--out``.
``check`` exits 0 when the data is representable and 1 when it is not;
every command exits 2 on bad input or solver errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import Grouping, load_dataset
from .datagen import GeneratorConfig, gen_collection, gen_mdm, gen_mnl, perturb, uniform_probs
from .errors import DataNotRepresentable, MdmError
from .experiments import EXPERIMENTS, ExperimentSpec, run_experiment
from .grouping import identify_grouping
from .limit import fit_mnl_mle, limit_gmdm, limit_mdm, limit_rum
from .predict import PredictionQuery, predict_interval, predict_interval_gmdm
from .represent import check_apu, check_gmdm, check_mdm, check_mnl, check_regular, check_rum

EXIT_OK, EXIT_NO, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    """Conflicting or missing command-line options."""


def _load_grouping(path: str | None, n: int) -> Grouping | None:
    if path is None:
        return None
    try:
        g = Grouping.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"cannot read grouping {path}: {exc}") from exc
    g.check(n)
    return g


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"expected a list of integers, got {text!r}") from exc


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"expected a list of numbers, got {text!r}") from exc


def _emit(args, payload) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    ds = load_dataset(args.dataset)
    model = args.model
    grouping = _load_grouping(args.grouping, ds.n)
    if model == "gmdm" and grouping is None:
        raise UsageError("--grouping is required for model gmdm")
    if model == "mdm":
        cert = check_mdm(ds, args.method if args.method in ("graph", "lp") else "graph")
        ok, detail = cert is not None, cert.to_dict() if cert else None
    elif model == "gmdm":
        cert = check_gmdm(ds, grouping)
        ok, detail = cert is not None, cert.to_dict() if cert else None
    elif model == "apu":
        cert = check_apu(ds)
        ok, detail = cert is not None, cert.to_dict() if cert else None
    elif model == "mnl":
        nu = check_mnl(ds, tol=args.tol)
        ok, detail = nu is not None, {"nu": list(nu)} if nu is not None else None
    elif model == "regular":
        ok, detail = check_regular(ds), None
    else:
        ok, detail = check_rum(ds), None
    _emit(args, {"model": model, "representable": ok, "certificate": detail})
    return EXIT_OK if ok else EXIT_NO


def cmd_predict(args) -> int:
    ds = load_dataset(args.dataset)
    A = _int_list(args.assortment)
    revenues = _float_list(args.revenues) if args.revenues else [1.0] * len(A)
    grouping = _load_grouping(args.grouping, ds.n)
    if args.mode == "gmdm":
        if grouping is None:
            raise UsageError("--grouping is required for mode gmdm")
        if args.method not in (None, "auto", "milp"):
            raise UsageError("mode gmdm only supports the MILP method")
        res = predict_interval_gmdm(PredictionQuery(ds, A, revenues), grouping)
    else:
        if grouping is not None:
            raise UsageError("--grouping only applies to mode gmdm")
        res = predict_interval(PredictionQuery(ds, A, revenues), args.method or "auto")
    _emit(args, res.to_dict())
    return EXIT_OK


def cmd_fit(args) -> int:
    ds = load_dataset(args.dataset)
    if args.model == "mdm":
        out = limit_mdm(ds, method=args.method or "auto", time_limit=args.time_limit).to_dict()
    elif args.model == "gmdm":
        grouping = _load_grouping(args.grouping, ds.n)
        if grouping is None:
            raise UsageError("--grouping is required for model gmdm")
        out = limit_gmdm(ds, grouping).to_dict()
    elif args.model == "mnl":
        fit = fit_mnl_mle(ds, tol=args.tol)
        out = {"loss": fit.loss(ds), "fitted": [list(r) for r in fit.fitted], "nu": list(fit.nu),
               "loglik": fit.loglik, "method": "MLE"}
    else:
        out = limit_rum(ds).to_dict()
    _emit(args, out)
    return EXIT_OK


def cmd_group(args) -> int:
    ds = load_dataset(args.dataset)
    fit = identify_grouping(ds, k_max=args.k_max, k=args.k, seed=args.seed)
    if args.curve:
        lines = ["k,inertia"] + [f"{k},{v:.10g}" for k, v in enumerate(fit.inertia, start=1)]
        Path(args.curve).write_text("\n".join(lines) + "\n", encoding="utf-8")
    _emit(args, {**fit.grouping.to_dict(), "inertia": list(fit.inertia)})
    return EXIT_OK


def cmd_gen(args) -> int:
    config = GeneratorConfig(args.n, args.m, variant=args.variant, seed=args.seed,
                             sizes=tuple(_int_list(args.sizes)), alpha=args.alpha, sigma=args.sigma)
    rng = np.random.default_rng(args.seed)
    coll = gen_collection(config)
    truth = {}
    if args.kind == "uniform":
        ds = uniform_probs(args.n, coll, rng)
    elif args.kind == "mnl":
        nu = rng.standard_normal(args.n)
        ds = perturb(gen_mnl(args.n, coll, nu), args.alpha, args.sigma, rng)
        truth = {"nu": nu.tolist()}
    else:
        grouping = Grouping([(i % args.groups) + 1 for i in range(args.n)]) if args.groups else None
        ds, grouping, spec = gen_mdm(args.n, coll, grouping, seed=rng)
        truth = {"marginals": spec.to_dict(), "grouping": grouping.to_dict()}
    if args.truth:
        Path(args.truth).write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    _emit(args, ds.to_dict())
    return EXIT_OK


def cmd_bench(args) -> int:
    grid = json.loads(args.grid) if args.grid else ()
    spec = ExperimentSpec(args.experiment, tuple(grid), args.replications, args.seed, None,
                          args.workers, args.timing)
    _emit(args, run_experiment(spec))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # the copy attached to subcommands must not overwrite values given earlier
    def default(v):
        return argparse.SUPPRESS if suppress else v

    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--seed", type=int, default=default(0), help="seed for every random draw")
    flags.add_argument("--tol", type=float, default=default(1e-7), help="tolerance for the MNL check and fit")
    flags.add_argument("--method", default=default(None), help="solution method (command specific)")
    flags.add_argument("--out", default=default(None), help="write the result here instead of stdout")
    return flags


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="mdmkit", parents=[_global_flags(suppress=False)],
                                     description="Marginal distribution model tools for choice data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", parents=[common], help="test whether data fits a choice model")
    p.add_argument("dataset")
    p.add_argument("--model", choices=["mdm", "gmdm", "apu", "mnl", "regular", "rum"], default="mdm")
    p.add_argument("--grouping")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("predict", parents=[common], help="revenue interval of an unseen assortment")
    p.add_argument("dataset")
    p.add_argument("--assortment", required=True, help="products, e.g. '1,3,4'")
    p.add_argument("--revenues", help="per-product revenues aligned with the sorted assortment")
    p.add_argument("--mode", choices=["mdm", "gmdm"], default="mdm")
    p.add_argument("--grouping")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("fit", parents=[common], help="best-fit loss (limit) of a model")
    p.add_argument("dataset")
    p.add_argument("--model", choices=["mdm", "gmdm", "mnl", "rum"], default="mdm")
    p.add_argument("--grouping")
    p.add_argument("--time-limit", type=float, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("group", parents=[common], help="identify product groups")
    p.add_argument("dataset")
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="fix the number of groups")
    p.add_argument("--curve", help="write the inertia curve CSV here")
    p.set_defaults(func=cmd_group)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--kind", choices=["mdm", "mnl", "uniform"], default="mdm")
    p.add_argument("--variant", choices=["random", "nested", "laminar"], default="random")
    p.add_argument("--sizes", default="2,3")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.01)
    p.add_argument("--groups", type=int, default=0, help="number of groups for kind mdm (0: one per product)")
    p.add_argument("--truth", help="write the ground truth JSON here")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", parents=[common], help="run a synthetic experiment, CSV output")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--grid", help="JSON list of cells overriding the default grid")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="add a runtime column")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except DataNotRepresentable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO
    except (MdmError, UsageError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
