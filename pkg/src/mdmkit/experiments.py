"""Synthetic studies at desk scale, one CSV row per grid cell.

Every cell draws its randomness from a child of one seed sequence, so a
rerun with the same seed reproduces the CSV byte for byte.  Runtimes are
left out of the CSV unless ``timing`` is set, for the same reason.
"""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Grouping
from .datagen import (GeneratorConfig, gen_collection, gen_mdm, gen_mnl, heterogeneous_exponentials,
                      perturb, solve_mdm_assortment, uniform_probs)
from .errors import MdmError
from .grouping import grouping_accuracy, identify_grouping
from .limit import fit_mnl_mle, limit_mdm, limit_rum
from .predict import PredictionQuery, predict_interval, predict_interval_gmdm
from .represent import check_apu, check_mdm, check_mnl, check_rum, mnl_probs

EXPERIMENTS = ("rep_power", "rep_vs_rum", "prediction", "limit_compare", "grouping_effect",
               "grouping_recovery")

DEFAULT_GRIDS = {
    "rep_power": [{"n": 7, "m": 20, "alpha": a} for a in (0.25, 0.5, 0.75, 1.0)],
    "rep_vs_rum": [{"n": 5, "m": 10, "alpha": a} for a in (0.25, 0.5, 1.0)],
    "prediction": [{"n": 7, "m": m} for m in (5, 10, 20)],
    "limit_compare": [{"n": 7, "m": 20}],
    "grouping_effect": [{"n": 6, "m": m} for m in (5, 10)],
    "grouping_recovery": [{"n": 7, "m": m, "sizes": (2, 3, 4, 5, 6, 7)} for m in (20, 60, 80, 100)],
}


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    grid: tuple = ()
    replications: int = 100
    seed: int = 0
    out: str | None = None
    workers: int = 1
    timing: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        grid = tuple(dict(c) for c in (self.grid or DEFAULT_GRIDS[self.experiment]))
        if not grid:
            raise ValueError("the grid must hold at least one cell")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        object.__setattr__(self, "grid", grid)


def _mean_se(values) -> tuple:
    v = np.array([x for x in values if x is not None], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def _sizes(cell: dict) -> tuple:
    return tuple(cell.get("sizes", (2, 3)))


def _collection(cell: dict, rng) -> list:
    config = GeneratorConfig(cell["n"], cell["m"], sizes=_sizes(cell), seed=int(rng.integers(1 << 31)))
    return gen_collection(config)


def _holdout(cell: dict, rng) -> tuple:
    """Collection of m + 1 assortments with one of them held out."""
    bigger = dict(cell, m=cell["m"] + 1)
    coll = _collection(bigger, rng)
    A = coll.pop(int(rng.integers(len(coll))))
    return coll, A


# --------------------------------------------------------------------------
# cells


def _rep_power(cell: dict, reps: int, rng) -> dict:
    n, alpha, sigma = cell["n"], cell["alpha"], cell.get("sigma", 0.01)
    mdm = mnl = 0
    for _ in range(reps):
        coll = _collection(cell, rng)
        ds = perturb(gen_mnl(n, coll, rng.standard_normal(n)), alpha, sigma, rng)
        mdm += check_mdm(ds) is not None
        mnl += check_mnl(ds) is not None
    return {"frac_mdm": mdm / reps, "frac_mnl": mnl / reps}


def _rep_vs_rum(cell: dict, reps: int, rng) -> dict:
    n, alpha, sigma = cell["n"], cell["alpha"], cell.get("sigma", 0.01)
    counts = {"mdm": 0, "rum": 0, "apu": 0, "both": 0}
    for _ in range(reps):
        coll = _collection(cell, rng)
        ds = perturb(gen_mnl(n, coll, rng.standard_normal(n)), alpha, sigma, rng)
        mdm, rum = check_mdm(ds) is not None, check_rum(ds)
        counts["mdm"] += mdm
        counts["rum"] += rum
        counts["both"] += mdm and rum
        counts["apu"] += check_apu(ds) is not None
    return {f"frac_{k}": v / reps for k, v in counts.items()}


def _prediction(cell: dict, reps: int, rng) -> dict:
    n = cell["n"]
    widths, covered, mnl_out = [], 0, 0
    for _ in range(reps):
        coll, A = _holdout(cell, rng)
        ds, _, spec = gen_mdm(n, coll, families=heterogeneous_exponentials(n, rng), seed=rng)
        r = rng.uniform(0.5, 2.0, size=len(A))
        res = predict_interval(PredictionQuery(ds, A, r))
        truth = float(np.dot(solve_mdm_assortment(spec, A), r))
        covered += res.lower - 1e-6 <= truth <= res.upper + 1e-6
        widths.append(res.width)
        guess = float(np.dot(mnl_probs(fit_mnl_mle(ds).nu, A), r))
        mnl_out += not (res.lower - 1e-6 <= guess <= res.upper + 1e-6)
    mean, se = _mean_se(widths)
    return {"coverage": covered / reps, "mean_width": mean, "se_width": se, "frac_mnl_outside": mnl_out / reps}


def _limit_compare(cell: dict, reps: int, rng) -> dict:
    n = cell["n"]
    time_limit = cell.get("time_limit")
    mdm, mnl, rum, exact = [], [], [], 0
    for _ in range(reps):
        ds = uniform_probs(n, _collection(cell, rng), rng)
        res = limit_mdm(ds, time_limit=time_limit)
        mdm.append(res.loss)
        exact += res.exact
        mnl.append(fit_mnl_mle(ds).loss(ds))
        if n <= 5:
            rum.append(limit_rum(ds).loss)
    out = {}
    for name, vals in (("mdm", mdm), ("mnl", mnl), ("rum", rum)):
        out[f"mean_{name}"], out[f"se_{name}"] = _mean_se(vals)
    out["frac_exact"] = exact / reps
    return out


def _grouping_effect(cell: dict, reps: int, rng) -> dict:
    n = cell["n"]
    one, free, strict = [], [], 0
    for _ in range(reps):
        coll, A = _holdout(cell, rng)
        ds, _, _ = gen_mdm(n, coll, Grouping.single(n), seed=rng)
        q = PredictionQuery(ds, A, rng.uniform(0.5, 2.0, size=len(A)))
        a = predict_interval_gmdm(q, Grouping.single(n)).width
        b = predict_interval(q, "milp").width
        one.append(a)
        free.append(b)
        strict += a < b - 1e-9
    out = {}
    out["mean_width_k1"], out["se_width_k1"] = _mean_se(one)
    out["mean_width_kn"], out["se_width_kn"] = _mean_se(free)
    out["frac_strictly_narrower"] = strict / reps
    return out


def _grouping_recovery(cell: dict, reps: int, rng) -> dict:
    n = cell["n"]
    scores = []
    for _ in range(reps):
        while True:
            labels = rng.integers(1, 3, size=n)
            if len(set(labels.tolist())) == 2:
                break
        truth = Grouping([1 if g == labels[0] else 2 for g in labels])
        ds, _, _ = gen_mdm(n, _collection(cell, rng), truth, seed=rng)
        fit = identify_grouping(ds, k=2)
        scores.append(grouping_accuracy(fit.grouping, truth))
    mean, se = _mean_se(scores)
    return {"mean_accuracy": mean, "se_accuracy": se}


_CELLS = {
    "rep_power": _rep_power,
    "rep_vs_rum": _rep_vs_rum,
    "prediction": _prediction,
    "limit_compare": _limit_compare,
    "grouping_effect": _grouping_effect,
    "grouping_recovery": _grouping_recovery,
}


def _run_cell(args) -> dict:
    experiment, cell, reps, seed_seq, timing = args
    rng = np.random.default_rng(seed_seq)
    start = time.perf_counter()
    try:
        metrics = _CELLS[experiment](cell, reps, rng)
        status = "ok"
    except (MdmError, ValueError) as exc:
        metrics, status = {}, f"NA: {type(exc).__name__}"
    row = {"experiment": experiment, **{k: _fmt(v) for k, v in cell.items()}, "replications": reps}
    row.update({k: _fmt(v) for k, v in metrics.items()})
    row["status"] = status
    if timing:
        row["runtime_s"] = _fmt(time.perf_counter() - start)
    return row


def _fmt(v):
    if isinstance(v, float):
        return "NA" if math.isnan(v) else f"{v:.10g}"
    if isinstance(v, (tuple, list)):
        return " ".join(str(x) for x in v)
    return v


def run_experiment(spec: ExperimentSpec) -> str:
    """Run every grid cell and return the CSV text (also written to spec.out)."""
    children = np.random.SeedSequence(spec.seed).spawn(len(spec.grid))
    jobs = [(spec.experiment, cell, spec.replications, child, spec.timing)
            for cell, child in zip(spec.grid, children)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = [_run_cell(job) for job in jobs]
    fields = []
    for row in rows:
        fields += [k for k in row if k not in fields]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, restval="NA", lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if spec.out:
        Path(spec.out).write_text(text, encoding="utf-8")
    return text
