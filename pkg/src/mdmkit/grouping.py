"""Data-driven identification of product groups.

The distance between two products is the smallest total violation of the
grouped representability conditions when only those two products share a
noise distribution.  Products are then clustered with k-medoids on the
resulting distance matrix.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import solver
from .core import ChoiceDataset, Grouping, ensure_valid, is_zero, mdm_relations, same_prob
from .errors import DataNotRepresentable, SolverFailure
from .represent import check_mdm

PAM_RESTARTS = 10
INERTIA_TOL = 1e-9


def _cross_relations(dataset: ChoiceDataset, i: int, j: int) -> tuple:
    """Cell pairs ((a, S), (b, T)) across products i and j.

    ``strict`` holds pairs whose first cell has the smaller probability;
    ``equal`` holds pairs with the same nonzero probability.
    """
    strict, equal = [], []
    for k in dataset.containing.get(i, []):
        p = dataset.prob(i, k)
        for l in dataset.containing.get(j, []):
            q = dataset.prob(j, l)
            if same_prob(p, q):
                if not is_zero(p):
                    equal.append(((i, k), (j, l)))
            elif p < q:
                strict.append(((i, k), (j, l)))
            else:
                strict.append(((j, l), (i, k)))
    return strict, equal


def _distance(dataset: ChoiceDataset, i: int, j: int, relations: tuple, backend: str) -> float:
    m = dataset.m
    eps = 1.0 / (2 * m + 1)
    b = solver.LPBuilder()
    # free levels: the eps gaps alone fix the scale of the violations
    lam = [b.var(-math.inf, math.inf) for _ in range(m)]
    nu = {i: b.var(0.0, 0.0), j: b.var(-math.inf, math.inf)}
    strict_lam, equal_lam = relations
    for hi, lo in strict_lam:
        b.row({lam[hi]: 1.0, lam[lo]: -1.0}, solver.GE, eps)
    for s, t in equal_lam:
        b.row({lam[s]: 1.0, lam[t]: -1.0}, solver.EQ, 0.0)

    def gap(a, c):
        # level of cell a minus level of cell c
        (ia, ka), (ic, kc) = a, c
        coefs = {}
        for v, sign in ((lam[ka], 1.0), (nu[ia], -1.0), (lam[kc], -1.0), (nu[ic], 1.0)):
            coefs[v] = coefs.get(v, 0.0) + sign
        return coefs

    strict, equal = _cross_relations(dataset, i, j)
    for a, c in strict:
        # the smaller probability needs the higher level; pay for any shortfall
        short = b.var(0.0, math.inf, cost=1.0)
        b.row({**gap(a, c), short: 1.0}, solver.GE, eps)
    for a, c in equal:
        dev = b.var(0.0, math.inf, cost=1.0)
        b.row({**gap(a, c), dev: 1.0}, solver.GE, 0.0)
        b.row({**{v: -w for v, w in gap(a, c).items()}, dev: 1.0}, solver.GE, 0.0)
    res = solver.solve_lp(b.build(), backend)
    if not res.optimal:
        raise SolverFailure(f"distance program for products {i}, {j} ended with status {res.status}")
    return max(0.0, float(res.value))


def _require_mdm(dataset: ChoiceDataset) -> None:
    ensure_valid(dataset)
    if check_mdm(dataset) is None:
        raise DataNotRepresentable("grouping identification needs MDM-representable data")


def pairwise_distance(dataset: ChoiceDataset, i: int, j: int, backend: str = "auto") -> float:
    """Violation of the grouped conditions when i and j share a distribution."""
    _require_mdm(dataset)
    if i == j:
        return 0.0
    return _distance(dataset, i, j, mdm_relations(dataset), backend)


def distance_matrix(dataset: ChoiceDataset, backend: str = "auto", workers: int | None = None) -> np.ndarray:
    """Symmetric matrix of pairwise distances with a zero diagonal."""
    _require_mdm(dataset)
    n = dataset.n
    relations = mdm_relations(dataset)
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        values = list(pool.map(lambda ij: _distance(dataset, ij[0], ij[1], relations, backend), pairs))
    D = np.zeros((n, n))
    for (i, j), v in zip(pairs, values):
        D[i - 1, j - 1] = D[j - 1, i - 1] = v
    return D


# --------------------------------------------------------------------------
# k-medoids


def _inertia(D: np.ndarray, medoids) -> float:
    return float(D[:, list(medoids)].min(axis=1).sum())


def _build(D: np.ndarray, k: int) -> list:
    """Greedy start: repeatedly add the medoid that lowers the cost most."""
    first = int(np.argmin(D.sum(axis=1)))
    medoids = [first]
    while len(medoids) < k:
        rest = [c for c in range(len(D)) if c not in medoids]
        medoids.append(min(rest, key=lambda c: (_inertia(D, medoids + [c]), c)))
    return medoids


def _swap(D: np.ndarray, medoids: list) -> list:
    """Best-improvement swaps until no swap lowers the cost."""
    medoids = list(medoids)
    cost = _inertia(D, medoids)
    while True:
        best = (cost, None)
        for a in range(len(medoids)):
            for c in range(len(D)):
                if c in medoids:
                    continue
                trial = medoids[:a] + [c] + medoids[a + 1:]
                t = _inertia(D, trial)
                if t < best[0] - 1e-12:
                    best = (t, trial)
        if best[1] is None:
            return medoids
        cost, medoids = best


def k_medoids(D: np.ndarray, k: int, restarts: int = PAM_RESTARTS, seed: int = 0) -> tuple:
    """PAM on a precomputed distance matrix; returns (labels, medoids, inertia).

    The greedy start is tried first, then ``restarts - 1`` seeded random
    starts; the lowest-cost local optimum wins.
    """
    D = np.asarray(D, dtype=float)
    n = len(D)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}")
    rng = np.random.default_rng(seed)
    starts = [_build(D, k)]
    for _ in range(max(0, restarts - 1)):
        starts.append([int(c) for c in rng.choice(n, size=k, replace=False)])
    best = None
    for start in starts:
        medoids = sorted(_swap(D, start))
        cost = _inertia(D, medoids)
        if best is None or cost < best[1] - 1e-12:
            best = (medoids, cost)
    medoids, cost = best
    labels = [int(np.argmin(D[p, medoids])) for p in range(n)]
    return labels, medoids, cost


def elbow(inertia) -> int:
    """Number of groups at the largest second difference of the inertia curve.

    ``inertia[K-1]`` is the cost with K groups.  A curve that starts at zero
    selects one group; with only two points the second group is chosen when
    it lowers the cost.
    """
    curve = [float(v) for v in inertia]
    if curve[0] <= INERTIA_TOL:
        return 1
    if len(curve) < 3:
        return len(curve) if curve[-1] < curve[0] - INERTIA_TOL else 1
    best_k, best = 1, -math.inf
    for k in range(2, len(curve)):
        second = curve[k - 2] - 2 * curve[k - 1] + curve[k]
        if second > best + 1e-12:
            best_k, best = k, second
    return best_k


@dataclass(frozen=True)
class GroupingFit:
    grouping: Grouping
    inertia: tuple
    distances: np.ndarray


def _labels_to_grouping(labels) -> Grouping:
    # first-appearance relabeling keeps the output canonical
    names = {}
    return Grouping([names.setdefault(l, len(names) + 1) for l in labels])


def identify_grouping(dataset: ChoiceDataset, k_max: int | None = None, k: int | None = None,
                      backend: str = "auto", seed: int = 0) -> GroupingFit:
    """Cluster products by their pairwise distances.

    Runs k-medoids for K = 1..k_max and picks K by the elbow rule, unless
    ``k`` fixes the number of groups.
    """
    n = dataset.n
    k_max = n if k_max is None else k_max
    if not 1 <= k_max <= n:
        raise ValueError(f"k_max must lie in 1..{n}")
    D = distance_matrix(dataset, backend)
    fits = [k_medoids(D, K, seed=seed) for K in range(1, k_max + 1)]
    inertia = tuple(f[2] for f in fits)
    if k is None:
        k = elbow(inertia)
    elif not 1 <= k <= k_max:
        raise ValueError(f"k must lie in 1..{k_max}")
    return GroupingFit(_labels_to_grouping(fits[k - 1][0]), inertia, D)


# --------------------------------------------------------------------------
# accuracy


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def grouping_accuracy(predicted: Grouping, truth: Grouping) -> float:
    """V-measure: harmonic mean of homogeneity and completeness."""
    if predicted.n != truth.n:
        raise ValueError("groupings cover different numbers of products")
    pred = {g: r for r, g in enumerate(sorted(set(predicted.assignment)))}
    true = {g: r for r, g in enumerate(sorted(set(truth.assignment)))}
    table = np.zeros((len(true), len(pred)))
    for a, b in zip(truth.assignment, predicted.assignment):
        table[true[a], pred[b]] += 1
    h_true = _entropy(table.sum(axis=1))
    h_pred = _entropy(table.sum(axis=0))
    total = table.sum()
    # conditional entropies from the joint table
    joint = table[table > 0] / total
    h_joint = float(-(joint * np.log(joint)).sum())
    homogeneity = 1.0 if h_true == 0 else 1.0 - (h_joint - h_pred) / h_true
    completeness = 1.0 if h_pred == 0 else 1.0 - (h_joint - h_true) / h_pred
    if homogeneity + completeness == 0:
        return 0.0
    return 2 * homogeneity * completeness / (homogeneity + completeness)
