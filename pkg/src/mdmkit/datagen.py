"""Synthetic instance generators and the forward MDM choice solver."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ChoiceDataset, Grouping
from .errors import BisectionBracketFailure, InfeasibleConfig, OverflowRisk
from .represent import ExponentialCDF, MarginalSpec, PiecewiseLinearCDF, mnl_probs

BISECTION_TOL = 1e-10
BISECTION_ITERS = 200


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    m: int
    variant: str = "random"          # random | nested | laminar
    inclusion: float | None = None   # per-product inclusion probability
    sizes: tuple = (2, 3)            # used when inclusion is None
    seed: int = 0
    alpha: float = 0.0
    sigma: float = 0.01
    rates: tuple = (1.0, 4.0)        # exponential rate per group

    def __post_init__(self):
        if self.m < 1 or self.n < 2:
            raise InfeasibleConfig("need n >= 2 and m >= 1")
        if not 0 <= self.alpha <= 1 or self.sigma < 0:
            raise InfeasibleConfig("alpha must lie in [0, 1] and sigma must be nonnegative")


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def spawn(seed, count: int) -> list:
    """Independent child generators derived from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


# --------------------------------------------------------------------------
# collections


def _count_subsets(n: int, sizes) -> int:
    return sum(math.comb(n, s) for s in sizes if 2 <= s <= n)


def gen_collection(config: GeneratorConfig, rng: np.random.Generator | None = None) -> list:
    rng = make_rng(config.seed) if rng is None else rng
    n, m = config.n, config.m
    if config.variant == "nested":
        if m > n - 1:
            raise InfeasibleConfig(f"a chain of {m} assortments needs n >= {m + 1}")
        order = [int(i) for i in rng.permutation(np.arange(1, n + 1))]
        # strictly increasing sizes between 2 and n
        sizes = sorted(int(s) for s in rng.choice(np.arange(2, n + 1), size=m, replace=False))
        return [sorted(order[:s]) for s in sizes]
    if config.variant == "laminar":
        return _laminar(n, m, rng)
    if config.variant != "random":
        raise InfeasibleConfig(f"unknown variant {config.variant!r}")
    if config.inclusion is None:
        if _count_subsets(n, config.sizes) < m:
            raise InfeasibleConfig("not enough distinct subsets of the requested sizes")
        seen, out = set(), []
        while len(out) < m:
            s = int(rng.choice(config.sizes))
            S = tuple(sorted(int(i) for i in rng.choice(np.arange(1, n + 1), size=s, replace=False)))
            if S not in seen:
                seen.add(S)
                out.append(list(S))
        return out
    if 2 ** n - n - 1 < m:
        raise InfeasibleConfig("not enough distinct subsets")
    seen, out = set(), []
    tries = 0
    while len(out) < m:
        tries += 1
        if tries > 10_000 * m:
            raise InfeasibleConfig("inclusion probability too small to draw distinct assortments")
        mask = rng.random(n) < config.inclusion
        S = tuple(int(i) + 1 for i in np.nonzero(mask)[0])
        if len(S) >= 2 and S not in seen:
            seen.add(S)
            out.append(list(S))
    return out


def _laminar(n: int, m: int, rng: np.random.Generator) -> list:
    """Random laminar family: recursive splits of the ground set."""
    out, seen = [], set()
    pool = [tuple(range(1, n + 1))]
    attempts = 0
    while len(out) < m:
        attempts += 1
        if attempts > 1000 * m or not pool:
            raise InfeasibleConfig(f"could not build {m} laminar assortments on {n} products")
        block = pool[int(rng.integers(len(pool)))]
        if len(block) < 2:
            pool.remove(block)
            continue
        if block not in seen:
            seen.add(block)
            out.append(list(block))
        if len(block) >= 3:
            cut = int(rng.integers(1, len(block)))
            perm = [block[int(a)] for a in rng.permutation(len(block))]
            for part in (tuple(sorted(perm[:cut])), tuple(sorted(perm[cut:]))):
                if len(part) >= 2 and part not in seen and part not in pool:
                    pool.append(part)
        pool.remove(block)
    return out


# --------------------------------------------------------------------------
# MNL data


def gen_mnl(n: int, collection: Sequence[Sequence[int]], utilities: Sequence[float]) -> ChoiceDataset:
    probs = [mnl_probs(utilities, sorted(S)).tolist() for S in collection]
    return ChoiceDataset(n, [sorted(S) for S in collection], probs)


def distinct_weights(n: int, variant: str = "pow2") -> list:
    if n < 2:
        raise OverflowRisk("need at least two products")
    if variant == "pow2":
        if n > 60:
            raise OverflowRisk("2^n weights overflow past n=60")
        return [2 ** k for k in range(1, n + 1)]
    if variant == "product":
        if n > 12:
            raise OverflowRisk("product weights overflow past n=12")
        xs = [2]
        while len(xs) < n:
            xs.append(xs[-1] * sum(xs))
        return xs
    raise ValueError(f"unknown variant {variant!r}")


def gen_mnl_distinct(n: int, variant: str = "pow2") -> list:
    """Utilities ln x_k for the distinct-sum weight constructions."""
    return [math.log(x) for x in distinct_weights(n, variant)]


def perturb(dataset: ChoiceDataset, alpha: float, sigma: float, seed) -> ChoiceDataset:
    """p * (1 + sigma * N(0,1) * Bernoulli(alpha)), clamped and renormalized."""
    rng = make_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    rows = []
    for row in dataset.probs:
        p = np.array(row)
        noise = rng.standard_normal(p.size)
        mask = rng.random(p.size) < alpha
        q = np.clip(p * (1.0 + sigma * noise * mask), 0.0, 1.0)
        total = q.sum()
        rows.append((q / total if total > 0 else p).tolist())
    return dataset.with_probs(rows)


def uniform_probs(n: int, collection, rng: np.random.Generator) -> ChoiceDataset:
    """Choice probabilities drawn uniformly from each assortment's simplex."""
    rows = [rng.dirichlet(np.ones(len(S))).tolist() for S in collection]
    return ChoiceDataset(n, [sorted(S) for S in collection], rows)


# --------------------------------------------------------------------------
# forward MDM solver


def _tail_sum(marginals: MarginalSpec, S, lam: float) -> float:
    return float(sum(max(0.0, 1.0 - float(marginals.cdfs[i - 1](lam - marginals.nu[i - 1]))) for i in S))


def solve_mdm_assortment(marginals: MarginalSpec, S: Sequence[int]) -> np.ndarray:
    """Choice probabilities of the MDM on S via bisection on the multiplier.

    Finds lambda with sum_i max(0, 1 - F_i(lambda - nu_i)) = 1 and returns
    the summands (rescaled by the residual, at most 1e-10).
    """
    S = sorted(S)
    lo = min(marginals.nu[i - 1] + marginals.cdfs[i - 1].support[0] for i in S)
    hi = max(marginals.nu[i - 1] + marginals.cdfs[i - 1].support[1] for i in S) + 1.0
    g_lo, g_hi = _tail_sum(marginals, S, lo), _tail_sum(marginals, S, hi)
    if not (g_lo >= 1.0 - BISECTION_TOL and g_hi <= 1.0 + BISECTION_TOL):
        raise BisectionBracketFailure(f"no sign change on [{lo}, {hi}]: {g_lo}, {g_hi}")
    lam = lo
    for _ in range(BISECTION_ITERS):
        lam = 0.5 * (lo + hi)
        g = _tail_sum(marginals, S, lam)
        if abs(g - 1.0) <= BISECTION_TOL:
            break
        if g > 1.0:
            lo = lam
        else:
            hi = lam
    x = np.array([max(0.0, 1.0 - float(marginals.cdfs[i - 1](lam - marginals.nu[i - 1]))) for i in S])
    return x / x.sum()


def mdm_dataset(marginals: MarginalSpec, collection) -> ChoiceDataset:
    collection = [sorted(S) for S in collection]
    return ChoiceDataset(marginals.n, collection,
                         [solve_mdm_assortment(marginals, S).tolist() for S in collection])


def gen_mdm(n: int, collection, grouping: Grouping | None = None, families: Sequence | None = None,
            seed=0, nu_range: tuple = (0.0, 1.0)) -> tuple:
    """Ground-truth (G-)MDM instance: uniform utilities, one CDF per group.

    ``families`` holds one CDF per group (default exponential with rates 1
    and 4, cycling when there are more groups).
    """
    rng = make_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    grouping = Grouping.singletons(n) if grouping is None else grouping
    grouping.check(n)
    if families is None:
        rates = (1.0, 4.0)
        families = [ExponentialCDF(rates[g % 2]) for g in range(grouping.K)]
    if len(families) < grouping.K:
        raise InfeasibleConfig("one marginal family per group is required")
    nu = rng.uniform(nu_range[0], nu_range[1], size=n)
    marginals = MarginalSpec([families[grouping.group(i) - 1] for i in range(1, n + 1)], nu)
    return mdm_dataset(marginals, collection), grouping, marginals


def heterogeneous_exponentials(n: int, rng: np.random.Generator, low: float = 0.5, high: float = 4.0) -> list:
    """Nonidentical exponential marginals, one per product."""
    return [ExponentialCDF(r) for r in rng.uniform(low, high, size=n)]


# --------------------------------------------------------------------------
# rankings


def kendall_tau(a: Sequence, b: Sequence) -> int:
    """Discordant pairs among the elements ranked by both lists."""
    pos_a = {x: r for r, x in enumerate(a)}
    pos_b = {x: r for r, x in enumerate(b)}
    common = [x for x in a if x in pos_b]
    count = 0
    for x, y in itertools.combinations(common, 2):
        if (pos_a[x] - pos_a[y]) * (pos_b[x] - pos_b[y]) < 0:
            count += 1
    return count
