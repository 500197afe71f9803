"""Best-fit estimation: the limit of MDM and G-MDM under weighted L1 loss.

Also houses the baselines the limit is compared against: the MNL maximum
likelihood fit and the limit of RUM for small n.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import solver
from .core import (WEIGHTED_L1, ChoiceDataset, Grouping, LossSpec, Structure, collection_structure,
                   ensure_valid, overlapping_pairs)
from .errors import CollectionTooLarge, NonConvergence, SolverFailure, TooManyProducts
from .ordering import diff, link
from .represent import mnl_probs, ranking_columns

MILP = "MILP"
RANKING_ENUM = "RankingEnum"
STRUCTURED_LP = "StructuredLP"
RUM = "RUM"

ENUM_CAP = 5040
ENUM_MAX_ASSORTMENTS = 7
RUM_LIMIT_MAX_PRODUCTS = 6
MLE_TOL = 1e-7
MLE_MAX_ITER = 200_000


@dataclass(frozen=True)
class LimitResult:
    """Optimal loss, the fitted probabilities and the disutilities behind them.

    ``separation`` is the smallest gap between distinct disutility levels
    of overlapping assortments; it tells recover_delta_optimal which
    differences in ``lam`` are real.
    """

    loss: float
    fitted: tuple
    lam: tuple | None
    method: str
    separation: float = 0.0
    exact: bool = True
    bound: float | None = None  # proven lower bound on the loss when not exact

    def fitted_dataset(self, dataset: ChoiceDataset) -> ChoiceDataset:
        return dataset.with_probs(self.fitted)

    def to_dict(self) -> dict:
        out = {"loss": self.loss, "fitted": [list(r) for r in self.fitted],
               "lambda": None if self.lam is None else list(self.lam), "method": self.method}
        if not self.exact:
            out["exact"] = False
            out["bound"] = self.bound
        return out


def _check_loss(loss: LossSpec) -> None:
    if loss.kind != WEIGHTED_L1.kind:
        raise ValueError(f"only {WEIGHTED_L1.kind} loss is supported")


class _FitModel:
    """x_{i,S} variables with L1 deviations from the data in an LPBuilder."""

    def __init__(self, dataset: ChoiceDataset):
        self.ds = dataset
        self.b = solver.LPBuilder()
        self.x = {}
        for k, S in enumerate(dataset.assortments):
            w = dataset.weights[k]
            for i, p in zip(S, dataset.probs[k]):
                xv = self.b.var(0.0, 1.0)
                dev = self.b.var(0.0, math.inf, cost=w)
                self.b.row({dev: 1.0, xv: -1.0}, solver.GE, -p)
                self.b.row({dev: 1.0, xv: 1.0}, solver.GE, p)
                self.x[i, k] = xv
            self.b.row({self.x[i, k]: 1.0 for i in S}, solver.EQ, 1.0)

    def at_least(self, i: int, k: int, l: int) -> None:
        """x_{i,k} >= x_{i,l}."""
        self.b.row({self.x[i, k]: 1.0, self.x[i, l]: -1.0}, solver.GE, 0.0)

    def fitted(self, xval) -> tuple:
        rows = []
        for k, S in enumerate(self.ds.assortments):
            r = np.clip([xval[self.x[i, k]] for i in S], 0.0, 1.0)
            rows.append(tuple(float(v) for v in r / r.sum()))
        return tuple(rows)


def _finish(dataset, model, res, lam, method, separation) -> LimitResult:
    stopped = res.status == solver.TIME_LIMIT
    if not (res.optimal or stopped):
        raise SolverFailure(f"limit program ended with status {res.status}")
    fitted = model.fitted(res.x)
    if stopped:
        return LimitResult(WEIGHTED_L1(dataset, fitted), fitted, lam, method, separation,
                           exact=False, bound=max(0.0, float(res.bound)))
    return LimitResult(WEIGHTED_L1(dataset, fitted), fitted, lam, method, separation)


# --------------------------------------------------------------------------
# MDM


def limit_structured(dataset: ChoiceDataset, backend: str = "auto") -> LimitResult:
    """Regularity-constrained fit, exact for nested and laminar collections."""
    if collection_structure(dataset) == Structure.GENERAL:
        raise ValueError("the collection is neither nested nor laminar")
    model = _FitModel(dataset)
    for k, l in overlapping_pairs(dataset):
        small, big = (k, l) if dataset.sets[k] < dataset.sets[l] else (l, k)
        for i in dataset.sets[small]:
            model.at_least(i, small, big)
    res = solver.solve_lp(model.b.build(), backend)
    # larger assortments sit at larger disutility
    sizes = sorted({len(S) for S in dataset.sets})
    sep = 1.0 / (len(sizes) + 1)
    lam = tuple(sep * (1 + sizes.index(len(S))) for S in dataset.sets)
    return _finish(dataset, model, res, lam, STRUCTURED_LP, sep)


def limit_ranking_enum(dataset: ChoiceDataset, loss: LossSpec = WEIGHTED_L1, backend: str = "auto",
                       cap: int = ENUM_CAP) -> LimitResult:
    """Minimum over total orders of the assortments of the monotone-fit LP.

    Orders inducing the same orientation of every overlapping pair yield
    the same LP and are solved once.
    """
    _check_loss(loss)
    ensure_valid(dataset)
    m = dataset.m
    if m > ENUM_MAX_ASSORTMENTS or math.factorial(m) > cap:
        raise CollectionTooLarge(f"{m} assortments exceed the enumeration cap")
    pairs = overlapping_pairs(dataset)
    seen = set()
    best = None
    for order in itertools.permutations(range(m)):
        pos = {k: r for r, k in enumerate(order)}
        key = tuple(pos[k] < pos[l] for k, l in pairs)
        if key in seen:
            continue
        seen.add(key)
        model = _FitModel(dataset)
        # later in the order means smaller disutility and larger probabilities
        for i, ks in dataset.containing.items():
            chain = sorted(ks, key=pos.__getitem__)
            for early, late in zip(chain, chain[1:]):
                model.at_least(i, late, early)
        res = solver.solve_lp(model.b.build(), backend)
        if res.optimal and (best is None or res.value < best[0].value - 1e-12):
            best = (res, model, pos)
    if best is None:
        raise SolverFailure("no ordering admits a fit")
    res, model, pos = best
    sep = 1.0 / (m + 1)
    lam = tuple(sep * (m - pos[k]) for k in range(m))
    return _finish(dataset, model, res, lam, RANKING_ENUM, sep)


def limit_milp(dataset: ChoiceDataset, backend: str = "auto", formulation: str = "ordering",
               time_limit: float | None = None) -> LimitResult:
    """Weighted L1 limit as a MILP.

    ``formulation="ordering"`` places the assortments in a linear order with
    one binary per pair (a before b means lower disutility) and 3-cycle
    elimination rows; every product shared by a and b must then have
    x_{i,a} >= x_{i,b}.  ``formulation="pairwise"`` uses explicit
    disutilities with a pair of binaries per overlapping pair.  With
    ``time_limit`` (seconds) the best incumbent found is returned and the
    result carries the proven lower bound.
    """
    ensure_valid(dataset)
    if formulation == "ordering":
        return _limit_ordering(dataset, backend, time_limit)
    if formulation != "pairwise":
        raise ValueError(f"unknown formulation {formulation!r}")
    m = dataset.m
    eps = 1.0 / (2 * m + 1)
    model = _FitModel(dataset)
    b = model.b
    lam = [b.var(0.0, 1.0) for _ in range(m)]
    links = {}
    for k, l in overlapping_pairs(dataset):
        shared = [(model.x[i, k], model.x[i, l]) for i in sorted(dataset.sets[k] & dataset.sets[l])]
        links[k, l] = link(b, {lam[k]: 1.0, lam[l]: -1.0}, shared, eps)
    _transitivity_cuts(b, links, m)
    res = solver.solve_milp(b.build_mip(), backend, time_limit=time_limit)
    lam_val = tuple(float(res.x[j]) for j in lam) if res.x is not None else None
    return _finish(dataset, model, res, lam_val, MILP, eps)


def _limit_ordering(dataset: ChoiceDataset, backend: str, time_limit: float | None) -> LimitResult:
    m = dataset.m
    model = _FitModel(dataset)
    b = model.b
    first = {(a, c): b.var(binary=True) for a, c in itertools.combinations(range(m), 2)}
    for a, c, e in itertools.combinations(range(m), 3):
        row = {first[a, c]: 1.0, first[c, e]: 1.0, first[a, e]: -1.0}
        b.row(row, solver.GE, 0.0)
        b.row(row, solver.LE, 1.0)
    for a, c in overlapping_pairs(dataset):
        a, c = min(a, c), max(a, c)
        for i in sorted(dataset.sets[a] & dataset.sets[c]):
            # a first: x_{i,c} <= x_{i,a};  c first: x_{i,a} <= x_{i,c}
            b.row({model.x[i, c]: 1.0, model.x[i, a]: -1.0, first[a, c]: 1.0}, solver.LE, 1.0)
            b.row({model.x[i, a]: 1.0, model.x[i, c]: -1.0, first[a, c]: -1.0}, solver.LE, 0.0)
    res = solver.solve_milp(b.build_mip(), backend, time_limit=time_limit)
    lam = None
    sep = 1.0 / (m + 1)
    if res.x is not None:
        ahead = [0] * m
        for (a, c), v in first.items():
            if res.x[v] > 0.5:
                ahead[c] += 1
            else:
                ahead[a] += 1
        lam = tuple(sep * (1 + r) for r in ahead)
    return _finish(dataset, model, res, lam, MILP, sep)


def _transitivity_cuts(b: solver.LPBuilder, links: dict, m: int) -> None:
    """k below l and l below t imply k below t, for pairwise-overlapping triples."""

    def below(k, l):
        return links[k, l][0] if (k, l) in links else links[l, k][1]

    def linked(k, l):
        return (min(k, l), max(k, l)) in links

    for k, l, t in itertools.permutations(range(m), 3):
        if linked(k, l) and linked(l, t) and linked(k, t):
            b.row({below(k, l): 1.0, below(l, t): 1.0, below(k, t): -1.0}, solver.LE, 1.0)


def limit_mdm(dataset: ChoiceDataset, loss: LossSpec = WEIGHTED_L1, method: str = "auto",
              backend: str = "auto", cap: int = ENUM_CAP, time_limit: float | None = None) -> LimitResult:
    """Smallest weighted L1 distance from the data to an MDM-consistent assignment.

    ``method`` is auto, milp, enum or structured.  Auto uses the structured
    LP for nested or laminar collections, ranking enumeration when m! is
    within ``cap``, and the MILP otherwise.  ``time_limit`` applies to the
    MILP only.
    """
    _check_loss(loss)
    ensure_valid(dataset)
    if method == "auto":
        if collection_structure(dataset) != Structure.GENERAL:
            method = "structured"
        elif dataset.m <= ENUM_MAX_ASSORTMENTS and math.factorial(dataset.m) <= cap:
            method = "enum"
        else:
            method = "milp"
    if method == "structured":
        return limit_structured(dataset, backend)
    if method == "enum":
        return limit_ranking_enum(dataset, loss, backend, cap)
    if method == "milp":
        return limit_milp(dataset, backend, time_limit=time_limit)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# grouped MDM


def limit_gmdm(dataset: ChoiceDataset, grouping: Grouping, loss: LossSpec = WEIGHTED_L1,
               backend: str = "auto") -> LimitResult:
    """Limit under a G-MDM: one pair of binaries per same-group cell pair."""
    _check_loss(loss)
    ensure_valid(dataset)
    grouping.check(dataset.n)
    n, m = dataset.n, dataset.m
    eps = 1.0 / (2 * n * m + 1)
    model = _FitModel(dataset)
    b = model.b
    lam = [b.var(-math.inf, math.inf) for _ in range(m)]
    nu = [b.var(-math.inf, math.inf) for _ in range(n)]
    b.row({nu[0]: 1.0}, solver.EQ, 0.0)
    cells = [(i, k) for k in range(m) for i in dataset.assortments[k]]

    def level(i, k):
        return {lam[k]: 1.0, nu[i - 1]: -1.0}

    for i, k in cells:
        b.row(level(i, k), solver.GE, 0.0)
        b.row(level(i, k), solver.LE, 1.0)
    for a in range(len(cells)):
        i, k = cells[a]
        for c in range(a + 1, len(cells)):
            j, l = cells[c]
            if grouping.group(i) == grouping.group(j) and not (i == j and k == l):
                link(b, diff(level(i, k), level(j, l)), [(model.x[i, k], model.x[j, l])], eps)
    res = solver.solve_milp(b.build_mip(), backend)
    lam_val = tuple(float(res.x[j]) for j in lam) if res.optimal else None
    return _finish(dataset, model, res, lam_val, MILP, eps)


# --------------------------------------------------------------------------
# delta-optimal representable fit


@dataclass(frozen=True)
class DeltaOptimalFit:
    fitted: ChoiceDataset
    margin: float
    loss: float


def recover_delta_optimal(dataset: ChoiceDataset, limit: LimitResult, delta: float,
                          backend: str = "auto") -> DeltaOptimalFit:
    """Representable probabilities within ``delta`` of the limit.

    Keeps the order of the limit's disutilities and maximizes the margin by
    which probabilities of one product differ across strictly ordered
    assortments.  Assortments at the same level share one variable per
    product, so ties hold exactly.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if limit.lam is None:
        raise ValueError("the limit result carries no disutilities")
    ds = dataset
    tol = 0.5 * limit.separation
    b = solver.LPBuilder()
    margin = b.var(0.0, 1.0, cost=1.0)
    var = {}
    chains = {}
    for i, ks in ds.containing.items():
        if not ks:
            continue
        ks = sorted(ks, key=lambda k: limit.lam[k])
        levels = [[ks[0]]]
        for k in ks[1:]:
            if limit.lam[k] - limit.lam[levels[-1][0]] <= tol:
                levels[-1].append(k)
            else:
                levels.append([k])
        chain = []
        for group in levels:
            v = b.var(0.0, 1.0)
            for k in group:
                var[i, k] = v
            chain.append(v)
        chains[i] = chain
        # lower disutility, strictly larger probability
        for hi, lo in zip(chain, chain[1:]):
            b.row({hi: 1.0, lo: -1.0, margin: -1.0}, solver.GE, 0.0)
    budget = {}
    for k, S in enumerate(ds.assortments):
        b.row({var[i, k]: 1.0 for i in S}, solver.EQ, 1.0)
        for i, p in zip(S, ds.probs[k]):
            dev = b.var(0.0, math.inf)
            b.row({dev: 1.0, var[i, k]: -1.0}, solver.GE, -p)
            b.row({dev: 1.0, var[i, k]: 1.0}, solver.GE, p)
            budget[dev] = budget.get(dev, 0.0) + ds.weights[k]
    b.row(budget, solver.LE, limit.loss + delta)
    res = solver.maximize(b.build(), backend)
    if not res.optimal or res.value <= 0:
        raise SolverFailure("no strictly ordered fit within the loss budget")
    rows = []
    for k, S in enumerate(ds.assortments):
        rows.append([float(min(1.0, max(0.0, res.x[var[i, k]]))) for i in S])
    fitted = ds.with_probs(rows)
    return DeltaOptimalFit(fitted, float(res.value), WEIGHTED_L1(ds, fitted.probs))


# --------------------------------------------------------------------------
# MNL maximum likelihood


def _mle_arrays(dataset: ChoiceDataset) -> tuple:
    mask = np.zeros((dataset.m, dataset.n), dtype=bool)
    P = np.zeros((dataset.m, dataset.n))
    for k, S in enumerate(dataset.assortments):
        idx = np.array(S) - 1
        mask[k, idx] = True
        P[k, idx] = dataset.probs[k]
    return mask, P, np.array(dataset.weights, dtype=float)


def _softmax_rows(nu: np.ndarray, mask: np.ndarray) -> np.ndarray:
    z = np.where(mask, nu[None, :], -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def mnl_loglik(nu, dataset: ChoiceDataset) -> float:
    """Weighted log-likelihood sum_S w_S (sum_i p_iS nu_i - log sum_j e^nu_j)."""
    nu = np.asarray(nu, dtype=float)
    mask, P, w = _mle_arrays(dataset)
    z = np.where(mask, nu[None, :], -np.inf)
    top = z.max(axis=1)
    lse = top + np.log(np.where(mask, np.exp(z - top[:, None]), 0.0).sum(axis=1))
    return float(np.sum(w * ((P * np.where(mask, nu[None, :], 0.0)).sum(axis=1) - lse)))


def mnl_gradient(nu, dataset: ChoiceDataset) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    mask, P, w = _mle_arrays(dataset)
    return (w[:, None] * (P - _softmax_rows(nu, mask))).sum(axis=0)


@dataclass(frozen=True)
class MnlFit:
    nu: tuple
    fitted: tuple
    loglik: float
    iterations: int

    def loss(self, dataset: ChoiceDataset) -> float:
        return WEIGHTED_L1(dataset, self.fitted)


def fit_mnl_mle(dataset: ChoiceDataset, tol: float = MLE_TOL, max_iter: int = MLE_MAX_ITER) -> MnlFit:
    """MNL maximum likelihood by gradient ascent with backtracking.

    The last product that appears in the data is pinned at nu = 0, as are
    products that never appear.  Trial steps use the Barzilai-Borwein length
    and are halved until the Armijo condition holds.
    """
    ensure_valid(dataset)
    mask, P, w = _mle_arrays(dataset)
    used = np.nonzero(mask.any(axis=0))[0]
    free = np.zeros(dataset.n, dtype=bool)
    free[used[:-1]] = True

    def value(nu):
        z = np.where(mask, nu[None, :], -np.inf)
        top = z.max(axis=1)
        lse = top + np.log(np.where(mask, np.exp(z - top[:, None]), 0.0).sum(axis=1))
        return float(np.sum(w * ((P * np.where(mask, nu[None, :], 0.0)).sum(axis=1) - lse)))

    def grad(nu):
        g = (w[:, None] * (P - _softmax_rows(nu, mask))).sum(axis=0)
        return np.where(free, g, 0.0)

    nu = np.zeros(dataset.n)
    f, g = value(nu), grad(nu)
    step = 1.0
    it = 0
    while np.linalg.norm(g) > tol:
        it += 1
        if it > max_iter:
            raise NonConvergence(f"gradient norm {np.linalg.norm(g):.3g} after {max_iter} iterations")
        t = step
        while True:
            cand = nu + t * g
            fc = value(cand)
            if fc >= f + 0.5 * t * float(g @ g):
                break
            t *= 0.5
            if t < 1e-16:
                raise NonConvergence("line search failed to make progress")
        gc = grad(cand)
        s, y = cand - nu, gc - g
        sy = float(s @ y)
        # Barzilai-Borwein trial length for the next step (ascent: y.s < 0)
        step = float(s @ s) / -sy if sy < 0 else 2.0 * t
        step = min(max(step, 1e-8), 1e8)
        nu, f, g = cand, fc, gc
    fitted = tuple(tuple(float(v) for v in mnl_probs(nu, S)) for S in dataset.assortments)
    return MnlFit(tuple(float(v) for v in nu), fitted, f, it)


# --------------------------------------------------------------------------
# RUM


def limit_rum(dataset: ChoiceDataset, loss: LossSpec = WEIGHTED_L1, backend: str = "auto") -> LimitResult:
    """Closest mixture of rankings in weighted L1."""
    _check_loss(loss)
    ensure_valid(dataset)
    if dataset.n > RUM_LIMIT_MAX_PRODUCTS:
        raise TooManyProducts(f"the RUM limit is limited to n <= {RUM_LIMIT_MAX_PRODUCTS}")
    M, p = ranking_columns(dataset)
    entries = dataset.entries()
    b = solver.LPBuilder()
    theta = [b.var(0.0, math.inf) for _ in range(M.shape[1])]
    b.row({j: 1.0 for j in theta}, solver.EQ, 1.0)
    fit = []
    for r, (i, k, pr) in enumerate(entries):
        dev = b.var(0.0, math.inf, cost=dataset.weights[k])
        coefs = {theta[c]: M[r, c] for c in np.nonzero(M[r])[0]}
        b.row({**{j: -v for j, v in coefs.items()}, dev: 1.0}, solver.GE, -pr)
        b.row({**coefs, dev: 1.0}, solver.GE, pr)
        fit.append(coefs)
    res = solver.solve_lp(b.build(), backend)
    if not res.optimal:
        raise SolverFailure(f"RUM limit ended with status {res.status}")
    rows = defaultdict(list)
    for (i, k, _), coefs in zip(entries, fit):
        rows[k].append(max(0.0, sum(res.x[j] * v for j, v in coefs.items())))
    fitted = []
    for k in range(dataset.m):
        r = np.array(rows[k])
        fitted.append(tuple(float(v) for v in r / r.sum()))
    fitted = tuple(fitted)
    return LimitResult(WEIGHTED_L1(dataset, fitted), fitted, None, RUM)
