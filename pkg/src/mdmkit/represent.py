"""Representability checks and the constructive marginal synthesis.

Every check follows the same recipe: turn the observed probabilities into
order relations between assortments (or assortment/product cells), then test
whether a disutility assignment honouring them exists.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import solver
from .core import (ZERO_TOL, ChoiceDataset, GmdmCertificate, Grouping, MdmCertificate,
                   chain_constraints, ensure_valid, mdm_relations, same_prob, tie_levels)
from .errors import CertificateInvalid, TooManyProducts

MARGIN_TOL = 1e-7
RUM_MAX_PRODUCTS = 7


def graph_epsilon(m: int) -> float:
    return 1.0 / (2 * m + 1)


# --------------------------------------------------------------------------
# marginal distributions


class PiecewiseLinearCDF:
    """Continuous CDF interpolating (x_k, F_k); 0 left of x_0, 1 right of x_last."""

    kind = "piecewise_linear"

    def __init__(self, xs: Sequence[float], Fs: Sequence[float]):
        xs = np.asarray(xs, dtype=float)
        Fs = np.asarray(Fs, dtype=float)
        if xs.size < 2 or xs.size != Fs.size:
            raise ValueError("need at least two matching breakpoints")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(Fs) < 0) or abs(Fs[0]) > 1e-12 or abs(Fs[-1] - 1) > 1e-12:
            raise ValueError("CDF values must rise from 0 to 1")
        self.xs, self.Fs = xs, Fs

    def __call__(self, x):
        return np.interp(x, self.xs, self.Fs, left=0.0, right=1.0)

    @property
    def support(self) -> tuple:
        return float(self.xs[0]), float(self.xs[-1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x": self.xs.tolist(), "F": self.Fs.tolist()}


class ExponentialCDF:
    """F(x) = 1 - exp(-rate x) on x >= 0, evaluated in closed form."""

    kind = "exponential"
    TAIL = 1e-15

    def __init__(self, rate: float = 1.0):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    @property
    def support(self) -> tuple:
        # right end is where the survival probability drops below TAIL
        return 0.0, -math.log(self.TAIL) / self.rate

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}


def cdf_from_dict(d: dict):
    if d["kind"] == "exponential":
        return ExponentialCDF(d["rate"])
    return PiecewiseLinearCDF(d["x"], d["F"])


@dataclass(frozen=True)
class MarginalSpec:
    """Per-product marginal CDFs plus deterministic utilities nu."""

    cdfs: tuple
    nu: tuple

    def __post_init__(self):
        object.__setattr__(self, "cdfs", tuple(self.cdfs))
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        if len(self.cdfs) != len(self.nu):
            raise ValueError("one CDF and one utility per product")

    @property
    def n(self) -> int:
        return len(self.nu)

    def to_dict(self) -> dict:
        return {"nu": list(self.nu), "cdfs": [c.to_dict() for c in self.cdfs]}

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalSpec":
        return cls([cdf_from_dict(c) for c in d["cdfs"]], d["nu"])


# --------------------------------------------------------------------------
# MDM


def _graph_engine(dataset: ChoiceDataset, strict, equal) -> MdmCertificate | None:
    m = dataset.m
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in equal:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    below = defaultdict(set)
    indeg = defaultdict(int)
    for a, b in strict:
        ca, cb = find(a), find(b)
        if ca == cb:
            return None
        if cb not in below[ca]:
            below[ca].add(cb)
            indeg[cb] += 1
    classes = sorted({find(a) for a in range(m)})
    queue = [c for c in classes if indeg[c] == 0]
    order = []
    while queue:
        c = queue.pop()
        order.append(c)
        for d in below[c]:
            indeg[d] -= 1
            if indeg[d] == 0:
                queue.append(d)
    if len(order) != len(classes):
        return None
    level = {}
    for c in reversed(order):
        level[c] = 1 + max((level[d] for d in below[c]), default=-1)
    eps = graph_epsilon(m)
    return MdmCertificate(tuple(level[find(a)] * eps for a in range(m)), eps)


def _lp_engine(dataset: ChoiceDataset, strict, equal, backend: str) -> MdmCertificate | None:
    b = solver.LPBuilder()
    lam = [b.var(0.0, 1.0) for _ in range(dataset.m)]
    eps = b.var(0.0, 1.0, cost=1.0)
    for a, c in strict:
        b.row({lam[a]: 1.0, lam[c]: -1.0, eps: -1.0}, solver.GE, 0.0)
    for a, c in equal:
        b.row({lam[a]: 1.0, lam[c]: -1.0}, solver.EQ, 0.0)
    res = solver.maximize(b.build(), backend)
    if not res.optimal or res.value <= MARGIN_TOL:
        return None
    return MdmCertificate(tuple(float(res.x[j]) for j in lam), float(res.x[eps]))


def check_mdm(dataset: ChoiceDataset, engine: str = "graph", backend: str = "native") -> MdmCertificate | None:
    """Certificate of MDM representability, or None.

    ``engine`` selects the union-find/topological-order test ("graph") or
    the margin-maximizing LP ("lp"); both decide the same question.
    """
    ensure_valid(dataset)
    strict, equal = mdm_relations(dataset)
    if engine == "graph":
        return _graph_engine(dataset, strict, equal)
    if engine == "lp":
        return _lp_engine(dataset, strict, equal, backend)
    raise ValueError(f"unknown engine {engine!r}")


# --------------------------------------------------------------------------
# grouped MDM


def group_relations(dataset: ChoiceDataset, grouping: Grouping) -> tuple:
    """Strict and equal relations between (product, assortment) cells per group."""
    strict, equal = [], []
    for members in grouping.groups():
        cells = [((i, k), dataset.prob(i, k)) for i in members for k in dataset.containing.get(i, [])]
        s, e = chain_constraints(tie_levels(cells))
        strict += s
        equal += e
    return strict, equal


def check_gmdm(dataset: ChoiceDataset, grouping: Grouping, backend: str = "native") -> GmdmCertificate | None:
    ensure_valid(dataset)
    grouping.check(dataset.n)
    strict, equal = group_relations(dataset, grouping)
    b = solver.LPBuilder()
    lam = [b.var(0.0, 1.0) for _ in range(dataset.m)]
    # one utility per group is pinned to zero; the rest are free
    nu = []
    anchored = set()
    for i in dataset.products:
        g = grouping.group(i)
        if g in anchored:
            nu.append(b.var(-math.inf, math.inf))
        else:
            anchored.add(g)
            nu.append(b.var(0.0, 0.0))
    eps = b.var(0.0, 1.0, cost=1.0)

    def cell(i, k):
        return {lam[k]: 1.0, nu[i - 1]: -1.0}

    def diff(a, c):
        coefs = defaultdict(float)
        for j, v in cell(*a).items():
            coefs[j] += v
        for j, v in cell(*c).items():
            coefs[j] -= v
        return coefs

    for a, c in strict:
        coefs = diff(a, c)
        coefs[eps] -= 1.0
        b.row(coefs, solver.GE, 0.0)
    for a, c in equal:
        b.row(diff(a, c), solver.EQ, 0.0)
    res = solver.maximize(b.build(), backend)
    if not res.optimal or res.value <= MARGIN_TOL:
        return None
    return GmdmCertificate(tuple(float(res.x[j]) for j in lam),
                           tuple(float(res.x[j]) for j in nu), float(res.x[eps]))


def check_apu(dataset: ChoiceDataset, backend: str = "native") -> GmdmCertificate | None:
    return check_gmdm(dataset, Grouping.single(dataset.n), backend)


# --------------------------------------------------------------------------
# regular, MNL and RUM


def check_regular(dataset: ChoiceDataset) -> bool:
    ensure_valid(dataset)
    for k in range(dataset.m):
        for l in range(dataset.m):
            if k != l and dataset.sets[k] < dataset.sets[l]:
                for i in dataset.assortments[k]:
                    p, q = dataset.prob(i, k), dataset.prob(i, l)
                    if p < q and not same_prob(p, q):
                        return False
    return True


def mnl_probs(nu: Sequence[float], S: Sequence[int]) -> np.ndarray:
    v = np.array([nu[i - 1] for i in S], dtype=float)
    e = np.exp(v - v.max())
    return e / e.sum()


def check_mnl(dataset: ChoiceDataset, tol: float = 1e-7, backend: str = "native") -> tuple | None:
    """Utilities nu with e^nu reproducing every observed probability, or None."""
    ensure_valid(dataset)
    used = sorted(i for i, ks in dataset.containing.items() if ks)
    if any(p <= ZERO_TOL for row in dataset.probs for p in row):
        return None
    b = solver.LPBuilder()
    w = {i: b.var(0.0, 1.0) for i in used}
    t = b.var(0.0, 1.0, cost=1.0)
    for k, S in enumerate(dataset.assortments):
        for i, p in zip(S, dataset.probs[k]):
            coefs = defaultdict(float)
            for j in S:
                coefs[w[j]] += p
            coefs[w[i]] -= 1.0
            b.row(coefs, solver.EQ, 0.0)
    for i in used:
        b.row({w[i]: 1.0, t: -1.0}, solver.GE, 0.0)
    b.row({w[i]: 1.0 for i in used}, solver.EQ, 1.0)
    res = solver.maximize(b.build(), backend)
    if not res.optimal or res.value <= 1e-12:
        return None
    nu = [0.0] * dataset.n
    for i in used:
        nu[i - 1] = math.log(res.x[w[i]])
    shift = nu[used[-1] - 1]
    nu = [v - shift if (i + 1) in w else 0.0 for i, v in enumerate(nu)]
    for k, S in enumerate(dataset.assortments):
        if np.max(np.abs(mnl_probs(nu, S) - np.array(dataset.probs[k]))) > tol:
            return None
    return tuple(nu)


def ranking_columns(dataset: ChoiceDataset) -> tuple:
    """Distinct 0/1 columns (one per class of rankings) of the RUM system.

    Row r corresponds to ``dataset.entries()[r]``; a column marks which
    product is ranked first within each assortment.
    """
    used = sorted(i for i, ks in dataset.containing.items() if ks)
    if len(used) > RUM_MAX_PRODUCTS or dataset.n > RUM_MAX_PRODUCTS:
        raise TooManyProducts(f"ranking enumeration is capped at n={RUM_MAX_PRODUCTS}")
    entries = dataset.entries()
    seen = {}
    for perm in itertools.permutations(used):
        rank = {i: r for r, i in enumerate(perm)}
        top = [min(S, key=rank.__getitem__) for S in dataset.assortments]
        key = tuple(top)
        if key not in seen:
            seen[key] = np.array([1.0 if top[k] == i else 0.0 for i, k, _ in entries])
    cols = np.array(list(seen.values())).T if seen else np.zeros((len(entries), 0))
    return cols, np.array([p for _, _, p in entries])


def check_rum(dataset: ChoiceDataset, backend: str = "native") -> bool:
    ensure_valid(dataset)
    if dataset.m == 0:
        return True
    M, p = ranking_columns(dataset)
    b = solver.LPBuilder()
    lam = [b.var(0.0, math.inf) for _ in range(M.shape[1])]
    for r in range(M.shape[0]):
        b.row({lam[c]: M[r, c] for c in np.nonzero(M[r])[0]}, solver.EQ, p[r])
    b.row({j: 1.0 for j in lam}, solver.EQ, 1.0)
    return solver.solve_lp(b.build(), backend).optimal


# --------------------------------------------------------------------------
# constructive marginals


def synthesize_marginals(dataset: ChoiceDataset, cert: MdmCertificate, delta: float = 1.0) -> MarginalSpec:
    """Piecewise-linear marginals whose MDM reproduces the data exactly.

    F_i passes through (lambda_S, 1 - p_{i,S}).  The left tail drops to 0 a
    distance ``delta`` before the first point unless that point already has
    probability one; the right tail reaches 1 at the first zero-probability
    assortment, or ``delta`` after the last point.
    """
    ensure_valid(dataset)
    if not cert.verify(dataset):
        raise CertificateInvalid("certificate does not satisfy the data relations")
    cdfs = []
    for i in dataset.products:
        ks = dataset.containing.get(i, [])
        if not ks:
            cdfs.append(PiecewiseLinearCDF([0.0, 1.0], [0.0, 1.0]))
            continue
        pts = sorted((cert.lam[k], 1.0 - dataset.prob(i, k)) for k in ks)
        merged = []
        for x, F in pts:
            if merged and abs(x - merged[-1][0]) <= 1e-12:
                continue
            merged.append((x, F))
        xs, Fs = [], []
        closed = False
        for x, F in merged:
            if 1.0 - F <= ZERO_TOL:
                xs.append(x)
                Fs.append(1.0)
                closed = True
                break
            xs.append(x)
            Fs.append(F)
        if not closed:
            xs.append(xs[-1] + delta)
            Fs.append(1.0)
        if Fs[0] > ZERO_TOL:
            xs.insert(0, xs[0] - delta)
            Fs.insert(0, 0.0)
        else:
            Fs[0] = 0.0
        cdfs.append(PiecewiseLinearCDF(xs, Fs))
    return MarginalSpec(cdfs, [0.0] * dataset.n)
