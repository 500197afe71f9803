"""Worst-case and optimistic revenue of an unseen assortment.

Every consistent choice-probability vector for the new assortment A is
described by the position of A's disutility relative to the observed
assortments.  The general formulation encodes that position with a pair of
binaries per overlapping assortment; nested and laminar collections admit
plain LPs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import solver
from .core import (ChoiceDataset, Grouping, Structure, ensure_valid, forced_order, mdm_relations,
                   structure_of)
from .errors import DataNotRepresentable, NotNested, SolverFailure
from .ordering import diff, link, order_cuts
from .represent import check_gmdm, check_mdm, group_relations

GENERAL_MILP = "GeneralMILP"
NESTED_ENUM = "NestedEnum"
STRUCTURED_LP = "StructuredLP"


@dataclass(frozen=True)
class PredictionQuery:
    """A new assortment with per-product revenues.

    ``revenues`` is either indexed by product (length n) or aligned with the
    sorted assortment (length |A|).
    """

    dataset: ChoiceDataset
    assortment: tuple
    revenues: tuple
    grouping: Grouping | None = None

    def __post_init__(self):
        A = tuple(sorted(int(i) for i in self.assortment))
        object.__setattr__(self, "assortment", A)
        r = tuple(float(v) for v in self.revenues)
        n = self.dataset.n
        if len(A) < 2 or len(set(A)) != len(A) or A[0] < 1 or A[-1] > n:
            raise ValueError(f"assortment {A} must hold at least two distinct products in 1..{n}")
        if frozenset(A) in set(self.dataset.sets):
            raise ValueError(f"assortment {A} is already observed")
        if len(r) == n and len(A) != n:
            r = tuple(r[i - 1] for i in A)
        elif len(r) != len(A):
            raise ValueError("revenues must have length n or |A|")
        if any(v < 0 or not math.isfinite(v) for v in r):
            raise ValueError("revenues must be finite and nonnegative")
        object.__setattr__(self, "revenues", r)

    @classmethod
    def sales(cls, dataset: ChoiceDataset, assortment, product: int, grouping=None) -> "PredictionQuery":
        """Query for the choice probability of one product (unit revenue)."""
        A = sorted(assortment)
        return cls(dataset, A, [1.0 if i == product else 0.0 for i in A], grouping)


@dataclass(frozen=True)
class PredictionResult:
    lower: float
    upper: float
    argmin: tuple
    argmax: tuple
    method: str

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "argmin": list(self.argmin),
                "argmax": list(self.argmax), "method": self.method}


def _clean(x) -> tuple:
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return tuple(float(v) for v in x / x.sum())


def _result(low: solver.SolveResult, high: solver.SolveResult, low_x, high_x, method: str) -> PredictionResult:
    for res in (low, high):
        if not res.optimal:
            raise SolverFailure(f"prediction program ended with status {res.status}")
    return PredictionResult(float(low.value), float(max(high.value, low.value)),
                            _clean(low_x), _clean(high_x), method)


# --------------------------------------------------------------------------
# shared MILP pieces


def _solve_both(b: solver.LPBuilder, objective: dict, xs: Sequence[int], backend: str, method: str,
                integer: bool = True) -> PredictionResult:
    b.set_cost(objective)
    prog = b.build_mip() if integer else b.build()
    if integer:
        low = solver.solve_milp(prog, backend)
        high = solver.maximize(prog, backend)
    else:
        low = solver.solve_lp(prog, backend)
        high = solver.maximize(prog, backend)
    low_x = low.x[xs] if low.optimal else None
    high_x = high.x[xs] if high.optimal else None
    return _result(low, high, low_x, high_x, method)


# --------------------------------------------------------------------------
# MDM


def _milp(q: PredictionQuery, backend: str) -> PredictionResult:
    ds, A = q.dataset, q.assortment
    m = ds.m
    eps = 1.0 / (2 * m + 1)
    b = solver.LPBuilder()
    x = {i: b.var(0.0, 1.0) for i in A}
    b.row({x[i]: 1.0 for i in A}, solver.EQ, 1.0)
    lam = [b.var(0.0, 1.0) for _ in range(m)]
    lam_a = b.var(0.0, 1.0)
    strict, equal = mdm_relations(ds)
    for hi, lo in strict:
        b.row({lam[hi]: 1.0, lam[lo]: -1.0}, solver.GE, eps)
    for s, t in equal:
        b.row({lam[s]: 1.0, lam[t]: -1.0}, solver.EQ, 0.0)
    setA = frozenset(A)
    links, nodes = {}, []
    for k in range(m):
        shared = sorted(setA & ds.sets[k])
        if not shared:
            continue
        nodes.append(k)
        links[k] = link(b, {lam_a: 1.0, lam[k]: -1.0},
                         [(x[i], (ds.prob(i, k),)) for i in shared], eps)
    cls, above = forced_order(m, strict, equal)
    order_cuts(b, nodes, links, cls, above)
    xs = [x[i] for i in A]
    return _solve_both(b, dict(zip(xs, q.revenues)), xs, backend, GENERAL_MILP)


def _structured(q: PredictionQuery, backend: str) -> PredictionResult:
    ds, A = q.dataset, q.assortment
    setA = frozenset(A)
    b = solver.LPBuilder()
    x = {i: b.var(0.0, 1.0) for i in A}
    b.row({x[i]: 1.0 for i in A}, solver.EQ, 1.0)
    for k, S in enumerate(ds.sets):
        if S < setA:
            for i in S:
                b.row({x[i]: 1.0}, solver.LE, ds.prob(i, k))
        elif setA < S:
            for i in A:
                b.row({x[i]: 1.0}, solver.GE, ds.prob(i, k))
    xs = [x[i] for i in A]
    return _solve_both(b, dict(zip(xs, q.revenues)), xs, backend, STRUCTURED_LP, integer=False)


def predict_nested_enum(q: PredictionQuery, backend: str = "auto") -> PredictionResult:
    """One LP per position of A in the nested chain; min and max over positions."""
    ds, A = q.dataset, q.assortment
    if structure_of(ds.sets) != Structure.NESTED:
        raise NotNested("the observed collection is not nested")
    ensure_valid(ds)
    chain = sorted(range(ds.m), key=lambda k: len(ds.sets[k]))
    setA = frozenset(A)
    r = np.array(q.revenues)
    best_low, best_high = None, None
    for pos in range(len(chain) + 1):
        b = solver.LPBuilder()
        x = {i: b.var(0.0, 1.0) for i in A}
        b.row({x[i]: 1.0 for i in A}, solver.EQ, 1.0)
        if pos >= 1:
            k = chain[pos - 1]
            for i in sorted(setA & ds.sets[k]):
                b.row({x[i]: 1.0}, solver.LE, ds.prob(i, k))
        for k in chain[pos:]:
            for i in sorted(setA & ds.sets[k]):
                b.row({x[i]: 1.0}, solver.GE, ds.prob(i, k))
        xs = [x[i] for i in A]
        b.set_cost(dict(zip(xs, r)))
        lp = b.build()
        low = solver.solve_lp(lp, backend)
        if low.optimal and (best_low is None or low.value < best_low[0].value):
            best_low = (low, low.x[xs])
        high = solver.maximize(lp, backend)
        if high.optimal and (best_high is None or high.value > best_high[0].value):
            best_high = (high, high.x[xs])
    if best_low is None or best_high is None:
        raise SolverFailure("no position of the new assortment admits a consistent prediction")
    return _result(best_low[0], best_high[0], best_low[1], best_high[1], NESTED_ENUM)


def predict_interval(q: PredictionQuery, method: str = "auto", backend: str = "auto") -> PredictionResult:
    """[lower, upper] expected revenue of q.assortment over all consistent MDMs.

    ``method`` is auto, milp, nested or structured.  Auto picks the
    structured LP when the collection with A added is nested or laminar, the
    nested enumeration when only the observed collection is nested, and the
    general MILP otherwise.
    """
    ds = q.dataset
    if check_mdm(ds) is None:
        raise DataNotRepresentable("the observed choice data is not MDM-representable")
    extended = structure_of(list(ds.sets) + [frozenset(q.assortment)])
    if method == "auto":
        if extended != Structure.GENERAL:
            method = "structured"
        elif structure_of(ds.sets) == Structure.NESTED:
            method = "nested"
        else:
            method = "milp"
    if method == "structured":
        if extended == Structure.GENERAL:
            raise NotNested("the collection with the new assortment is neither nested nor laminar")
        return _structured(q, backend)
    if method == "nested":
        return predict_nested_enum(q, backend)
    if method == "milp":
        return _milp(q, backend)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# grouped MDM


def predict_interval_gmdm(q: PredictionQuery, grouping: Grouping | None = None,
                          backend: str = "auto") -> PredictionResult:
    """Interval under a G-MDM with the given grouping.

    Observed cells keep the order their probabilities dictate; each new cell
    (i, A) gets a pair of binaries against every same-group cell.
    """
    ds, A = q.dataset, q.assortment
    grouping = grouping or q.grouping
    if grouping is None:
        raise ValueError("a grouping is required")
    if check_gmdm(ds, grouping) is None:
        raise DataNotRepresentable("the observed choice data is not representable under this grouping")
    n, m = ds.n, ds.m
    eps = 1.0 / (2 * n * m + 1)
    b = solver.LPBuilder()
    x = {i: b.var(0.0, 1.0) for i in A}
    b.row({x[i]: 1.0 for i in A}, solver.EQ, 1.0)
    lam = [b.var(-math.inf, math.inf) for _ in range(m)]
    lam_a = b.var(-math.inf, math.inf)
    nu = [b.var(-math.inf, math.inf) for _ in range(n)]
    b.row({nu[0]: 1.0}, solver.EQ, 0.0)  # removes the common shift

    def level(i, k):
        return {(lam_a if k is None else lam[k]): 1.0, nu[i - 1]: -1.0}

    cells = [(i, k) for k in range(m) for i in ds.assortments[k]]
    for i, k in cells + [(i, None) for i in A]:
        b.row(level(i, k), solver.GE, 0.0)
        b.row(level(i, k), solver.LE, 1.0)
    index = {c: t for t, c in enumerate(cells)}
    strict, equal = group_relations(ds, grouping)
    strict = [(index[a], index[c]) for a, c in strict]
    equal = [(index[a], index[c]) for a, c in equal]
    for hi, lo in strict:
        b.row(diff(level(*cells[hi]), level(*cells[lo])), solver.GE, eps)
    for s, t in equal:
        b.row(diff(level(*cells[s]), level(*cells[t])), solver.EQ, 0.0)
    cls, above = forced_order(len(cells), strict, equal)
    for i in A:
        g = grouping.group(i)
        links, nodes = {}, []
        for t, (j, k) in enumerate(cells):
            if grouping.group(j) == g:
                nodes.append(t)
                links[t] = link(b, diff(level(i, None), level(j, k)),
                                 [(x[i], (ds.prob(j, k),))], eps)
        order_cuts(b, nodes, links, cls, above)
        for j in A:
            if j < i and grouping.group(j) == g:
                link(b, diff(level(i, None), level(j, None)), [(x[i], x[j])], eps)
    xs = [x[i] for i in A]
    return _solve_both(b, dict(zip(xs, q.revenues)), xs, backend, GENERAL_MILP)
