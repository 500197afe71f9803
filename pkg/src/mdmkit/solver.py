"""Dense two-phase primal simplex and best-first branch-and-bound.

Problems are always minimizations.  ``LPBuilder`` assembles problems row by
row from sparse coefficient dicts; the formulations elsewhere in the package
go through it.

The native engine is the default.  A ``highs`` backend (scipy's HiGHS
bindings) can be selected for problems that are too large for a dense
tableau; ``auto`` picks it only above a size threshold.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CycleLimitExceeded, NodeLimitExceeded, SolverFailure

FEAS_TOL = 1e-7
INT_TOL = 1e-6
PIVOT_TOL = 1e-9
COST_TOL = 1e-9
MAX_ITER = 1_000_000
MAX_NODES = 1_000_000

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"
TIME_LIMIT = "TimeLimit"  # stopped early with a feasible incumbent

LE, EQ, GE = "<=", "=", ">="

# dense tableau cells above which ``auto`` hands an LP to HiGHS
AUTO_CELL_LIMIT = 250_000
# binaries above which ``auto`` hands a MILP to HiGHS
AUTO_BINARY_LIMIT = 40


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: list
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        nv = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, nv)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        self.senses = list(self.senses)
        self.lb = np.zeros(nv) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(nv, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if not (self.A.shape[0] == self.b.size == len(self.senses)):
            raise ValueError("row data dimensions disagree")
        if self.lb.size != nv or self.ub.size != nv:
            raise ValueError("bound vectors have wrong length")
        if np.any(self.lb > self.ub):
            raise ValueError("lower bound exceeds upper bound")
        bad = set(self.senses) - {LE, EQ, GE}
        if bad:
            raise ValueError(f"unknown relation {bad}")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def with_bounds(self, lb, ub) -> "LinearProgram":
        return LinearProgram(self.c, self.A, self.senses, self.b, lb, ub)

    def max_violation(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        worst = max(0.0, float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        if self.n_rows:
            ax = self.A @ x
            for v, s, rhs in zip(ax, self.senses, self.b):
                if s == LE:
                    worst = max(worst, v - rhs)
                elif s == GE:
                    worst = max(worst, rhs - v)
                else:
                    worst = max(worst, abs(v - rhs))
        return worst


@dataclass
class MixedIntegerProgram:
    lp: LinearProgram
    binaries: list

    def __post_init__(self):
        self.binaries = sorted(set(int(j) for j in self.binaries))
        if any(not 0 <= j < self.lp.n_vars for j in self.binaries):
            raise ValueError("binary index out of range")


@dataclass
class SolveResult:
    status: str
    value: float = math.nan
    x: np.ndarray | None = None
    iterations: int = 0
    nodes: int = 0
    bound: float = math.nan  # proven lower bound (minimization)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class LPBuilder:
    """Incremental construction of (mixed-integer) linear programs."""

    def __init__(self):
        self.lb, self.ub, self.cost, self.names = [], [], [], []
        self.rows, self.senses, self.rhs = [], [], []
        self.binaries = []

    def var(self, lb=0.0, ub=math.inf, cost=0.0, name=None, binary=False) -> int:
        j = len(self.lb)
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
            self.binaries.append(j)
        self.lb.append(lb)
        self.ub.append(ub)
        self.cost.append(cost)
        self.names.append(name)
        return j

    def row(self, coefs: dict, sense: str, rhs: float) -> int:
        coefs = {j: v for j, v in coefs.items() if v != 0}
        self.rows.append(coefs)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        return len(self.rows) - 1

    def set_cost(self, coefs: dict) -> None:
        self.cost = [0.0] * len(self.lb)
        for j, v in coefs.items():
            self.cost[j] = float(v)

    def build(self) -> LinearProgram:
        nv = len(self.lb)
        A = np.zeros((len(self.rows), nv))
        for r, coefs in enumerate(self.rows):
            for j, v in coefs.items():
                A[r, j] += v
        return LinearProgram(np.array(self.cost, dtype=float), A, self.senses, self.rhs,
                             np.array(self.lb, dtype=float), np.array(self.ub, dtype=float))

    def build_mip(self) -> MixedIntegerProgram:
        return MixedIntegerProgram(self.build(), list(self.binaries))


# --------------------------------------------------------------------------
# native simplex


class _Tableau:
    """Standard-form tableau min c y, A y = b, y >= 0, b >= 0."""

    def __init__(self, A: np.ndarray, b: np.ndarray, basis: list, n_struct: int):
        m, N = A.shape
        self.T = np.zeros((m + 1, N + 1))
        self.T[:m, :N] = A
        self.T[:m, N] = b
        self.basis = list(basis)
        self.n_struct = n_struct
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def set_cost(self, c: np.ndarray) -> None:
        self.T[-1, :] = 0.0
        self.T[-1, :c.size] = c
        for r, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1, :] -= self.T[-1, j] * self.T[r, :]

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r, :] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        nz = np.nonzero(np.abs(col) > 0.0)[0]
        if nz.size:
            T[nz, :] -= np.outer(col[nz], T[r, :])
        self.basis[r] = c
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> str:
        """Primal simplex on the current tableau; returns OPTIMAL or UNBOUNDED."""
        T = self.T
        m = self.m
        degenerate = 0
        bland = False
        limit = 10 * (m + T.shape[1] - 1)
        while True:
            if self.iterations >= max_iter:
                raise CycleLimitExceeded(f"simplex exceeded {max_iter} iterations")
            d = T[-1, :-1]
            cand = np.nonzero((d < -COST_TOL) & allowed)[0]
            if cand.size == 0:
                return OPTIMAL
            if bland:
                c = int(cand[0])
            else:
                c = int(cand[np.argmin(d[cand])])
            col = T[:m, c]
            rows = np.nonzero(col > PIVOT_TOL)[0]
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12]
            if ties.size > 1:
                r = int(min(ties, key=lambda q: self.basis[q]))
            else:
                r = int(ties[0])
            if best <= 1e-12:
                degenerate += 1
                if degenerate > limit:
                    bland = True
            self.pivot(r, c)
            np.maximum(T[:m, -1], 0.0, out=T[:m, -1])


def _to_standard(lp: LinearProgram):
    """Rewrite bounds and relations into y >= 0 standard form.

    Returns (A_std, b_std, c_std, x_offset, x_map, kinds) where
    x = x_offset + x_map @ y[:n_struct] and kinds tags each row's slack type.
    """
    nv = lp.n_vars
    lb, ub = lp.lb, lp.ub
    cols = []  # (var index, sign)
    offset = np.zeros(nv)
    extra_rows = []  # (ycol, rhs) meaning y <= rhs
    for j in range(nv):
        lo, hi = lb[j], ub[j]
        if np.isfinite(lo) and np.isfinite(hi) and lo == hi:
            offset[j] = lo
        elif np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ny = len(cols)
    x_map = np.zeros((nv, ny))
    for q, (j, s) in enumerate(cols):
        x_map[j, q] = s
    A = lp.A @ x_map if lp.n_rows else np.zeros((0, ny))
    b = lp.b - (lp.A @ offset if lp.n_rows else 0.0)
    senses = list(lp.senses)
    if extra_rows:
        E = np.zeros((len(extra_rows), ny))
        for r, (q, rhs) in enumerate(extra_rows):
            E[r, q] = 1.0
        A = np.vstack([A, E])
        b = np.concatenate([b, [rhs for _, rhs in extra_rows]])
        senses += [LE] * len(extra_rows)
    c = x_map.T @ lp.c
    const = float(lp.c @ offset)
    return A, b, senses, c, const, offset, x_map


def _solve_native(lp: LinearProgram, max_iter: int = MAX_ITER) -> SolveResult:
    A, b, senses, c, const, offset, x_map = _to_standard(lp)
    m, ny = A.shape
    # drop empty rows up front (they are either trivially satisfied or infeasible)
    keep = []
    for r in range(m):
        if np.any(A[r] != 0.0):
            keep.append(r)
            continue
        s, rhs = senses[r], b[r]
        if (s == LE and rhs < -FEAS_TOL) or (s == GE and rhs > FEAS_TOL) or (s == EQ and abs(rhs) > FEAS_TOL):
            return SolveResult(INFEASIBLE)
    A, b, senses = A[keep], b[keep], [senses[r] for r in keep]
    m = len(keep)
    if m == 0:
        if np.any(c < -COST_TOL):
            return SolveResult(UNBOUNDED)
        x = offset.copy()
        return SolveResult(OPTIMAL, float(lp.c @ x), x)

    # flip rows to get b >= 0
    A = A.copy()
    b = b.copy()
    for r in range(m):
        if b[r] < 0:
            A[r] *= -1
            b[r] *= -1
            senses[r] = {LE: GE, GE: LE, EQ: EQ}[senses[r]]
    n_slack = sum(1 for s in senses if s != EQ)
    n_art = sum(1 for s in senses if s != LE)
    N = ny + n_slack + n_art
    full = np.zeros((m, N))
    full[:, :ny] = A
    basis = [0] * m
    sj, aj = ny, ny + n_slack
    art_cols = []
    for r, s in enumerate(senses):
        if s == LE:
            full[r, sj] = 1.0
            basis[r] = sj
            sj += 1
        elif s == GE:
            full[r, sj] = -1.0
            sj += 1
            full[r, aj] = 1.0
            basis[r] = aj
            art_cols.append(aj)
            aj += 1
        else:
            full[r, aj] = 1.0
            basis[r] = aj
            art_cols.append(aj)
            aj += 1
    tab = _Tableau(full, b, basis, ny)
    allowed = np.ones(N, dtype=bool)
    if art_cols:
        c1 = np.zeros(N)
        c1[art_cols] = 1.0
        tab.set_cost(c1)
        tab.run(allowed, max_iter)
        infeas = -tab.T[-1, -1]
        scale = max(1.0, float(np.max(np.abs(b))))
        if infeas > FEAS_TOL * scale:
            return SolveResult(INFEASIBLE, iterations=tab.iterations)
        # drive artificials out of the basis
        is_art = np.zeros(N, dtype=bool)
        is_art[art_cols] = True
        drop = []
        for r in range(m):
            if is_art[tab.basis[r]]:
                row = tab.T[r, :N]
                cand = np.nonzero((np.abs(row) > PIVOT_TOL) & ~is_art)[0]
                if cand.size:
                    q = int(cand[np.argmax(np.abs(row[cand]))])
                    tab.pivot(r, q)
                else:
                    drop.append(r)
        if drop:
            keep_rows = [r for r in range(m) if r not in set(drop)]
            tab.T = np.vstack([tab.T[keep_rows], tab.T[-1:]])
            tab.basis = [tab.basis[r] for r in keep_rows]
            full = full[keep_rows]
            b = b[keep_rows]
            m = len(keep_rows)
        allowed = ~is_art
        tab.T[:m, -1] = np.maximum(tab.T[:m, -1], 0.0)
    c2 = np.zeros(N)
    c2[:ny] = c
    tab.set_cost(c2)
    status = tab.run(allowed, max_iter)
    if status == UNBOUNDED:
        return SolveResult(UNBOUNDED, iterations=tab.iterations)
    y = np.zeros(N)
    y[tab.basis] = tab.T[:m, -1]
    x = np.clip(offset + x_map @ y[:ny], lp.lb, lp.ub)
    # refine basic values against the original columns
    if m:
        try:
            yb = np.linalg.solve(full[:, tab.basis], b)
        except np.linalg.LinAlgError:
            yb = None
        if yb is not None and np.all(np.isfinite(yb)):
            y2 = np.zeros(N)
            y2[tab.basis] = np.maximum(yb, 0.0)
            x2 = np.clip(offset + x_map @ y2[:ny], lp.lb, lp.ub)
            if lp.max_violation(x2) <= lp.max_violation(x):
                x = x2
    return SolveResult(OPTIMAL, float(lp.c @ x), x, iterations=tab.iterations)


# --------------------------------------------------------------------------
# HiGHS backend


def _highs_parts(lp: LinearProgram):
    le = [r for r, s in enumerate(lp.senses) if s == LE]
    ge = [r for r, s in enumerate(lp.senses) if s == GE]
    eq = [r for r, s in enumerate(lp.senses) if s == EQ]
    A_ub = np.vstack([lp.A[le], -lp.A[ge]]) if le or ge else None
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]]) if le or ge else None
    A_eq = lp.A[eq] if eq else None
    b_eq = lp.b[eq] if eq else None
    return A_ub, b_ub, A_eq, b_eq


def _solve_highs(lp: LinearProgram) -> SolveResult:
    from scipy.optimize import linprog

    A_ub, b_ub, A_eq, b_eq = _highs_parts(lp)
    bounds = [(None if not np.isfinite(lo) else lo, None if not np.isfinite(hi) else hi)
              for lo, hi in zip(lp.lb, lp.ub)]
    res = linprog(lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 0:
        return SolveResult(OPTIMAL, float(res.fun), np.asarray(res.x), iterations=int(res.nit))
    if res.status == 2:
        return SolveResult(INFEASIBLE)
    if res.status == 3:
        return SolveResult(UNBOUNDED)
    raise SolverFailure(f"HiGHS LP failed: {res.message}")


def _milp_highs(mip: MixedIntegerProgram, time_limit: float | None = None) -> SolveResult:
    from scipy.optimize import Bounds, LinearConstraint, milp

    lp = mip.lp
    integrality = np.zeros(lp.n_vars)
    integrality[mip.binaries] = 1
    lb, ub = lp.lb.copy(), lp.ub.copy()
    lb[mip.binaries] = np.maximum(lb[mip.binaries], 0.0)
    ub[mip.binaries] = np.minimum(ub[mip.binaries], 1.0)
    cons = []
    if lp.n_rows:
        lo = np.where([s == LE for s in lp.senses], -np.inf, lp.b)
        hi = np.where([s == GE for s in lp.senses], np.inf, lp.b)
        cons.append(LinearConstraint(lp.A, lo, hi))
    options = {"mip_rel_gap": 1e-9}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    res = milp(lp.c, constraints=cons, integrality=integrality, bounds=Bounds(lb, ub), options=options)
    if res.status == 1 and res.x is not None:
        x = np.asarray(res.x)
        x[mip.binaries] = np.round(x[mip.binaries])
        bound = getattr(res, "mip_dual_bound", math.nan)
        return SolveResult(TIME_LIMIT, float(lp.c @ x), x, bound=float(bound))
    if res.status == 0:
        x = np.asarray(res.x)
        x[mip.binaries] = np.round(x[mip.binaries])
        # polish the continuous part with binaries fixed
        fixed = _solve_highs(lp.with_bounds(np.where(_mask(lp, mip), x, lp.lb),
                                            np.where(_mask(lp, mip), x, lp.ub)))
        if fixed.optimal:
            return SolveResult(OPTIMAL, fixed.value, fixed.x, bound=fixed.value)
        return SolveResult(OPTIMAL, float(res.fun), x, bound=float(res.fun))
    if res.status == 2:
        return SolveResult(INFEASIBLE)
    if res.status == 3:
        return SolveResult(UNBOUNDED)
    raise SolverFailure(f"HiGHS MILP failed: {res.message}")


def _mask(lp: LinearProgram, mip: MixedIntegerProgram) -> np.ndarray:
    mask = np.zeros(lp.n_vars, dtype=bool)
    mask[mip.binaries] = True
    return mask


# --------------------------------------------------------------------------
# public entry points


def _pick(backend: str, cells: int, binaries: int = 0) -> str:
    if backend not in ("auto", "native", "highs"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend != "auto":
        return backend
    if cells > AUTO_CELL_LIMIT or binaries > AUTO_BINARY_LIMIT:
        return "highs"
    return "native"


def _cells(lp: LinearProgram) -> int:
    return (lp.n_rows + 1) * (2 * lp.n_vars + lp.n_rows + 1)


def solve_lp(lp: LinearProgram, backend: str = "native", max_iter: int = MAX_ITER) -> SolveResult:
    """Minimize c.x over the rows and bounds of ``lp``."""
    if not (np.all(np.isfinite(lp.c)) and np.all(np.isfinite(lp.A)) and np.all(np.isfinite(lp.b))):
        raise ValueError("problem data must be finite")
    if _pick(backend, _cells(lp)) == "highs":
        return _solve_highs(lp)
    return _solve_native(lp, max_iter)


def solve_milp(mip: MixedIntegerProgram, backend: str = "native",
               max_nodes: int = MAX_NODES, max_iter: int = MAX_ITER,
               time_limit: float | None = None) -> SolveResult:
    """Best-first branch and bound over the binary variables of ``mip``.

    With ``time_limit`` (seconds) the search may stop early; if an incumbent
    exists the result has status TimeLimit and ``bound`` holds the best
    proven lower bound.
    """
    lp = mip.lp
    if _pick(backend, _cells(lp), len(mip.binaries)) == "highs":
        return _milp_highs(mip, time_limit)
    start = time.monotonic()
    bins = np.array(mip.binaries, dtype=int)
    base_lb, base_ub = lp.lb.copy(), lp.ub.copy()
    base_lb[bins] = np.maximum(base_lb[bins], 0.0)
    base_ub[bins] = np.minimum(base_ub[bins], 1.0)
    # a binary with bounds inside (0, 1) can only be fixed
    base_lb[bins] = np.ceil(base_lb[bins] - INT_TOL)
    base_ub[bins] = np.floor(base_ub[bins] + INT_TOL)
    if np.any(base_lb > base_ub):
        return SolveResult(INFEASIBLE)

    def relax(lo, hi):
        return _solve_native(lp.with_bounds(lo, hi), max_iter)

    root = relax(base_lb, base_ub)
    if root.status != OPTIMAL:
        return SolveResult(root.status, nodes=1)
    best_val, best_x = math.inf, None
    counter = itertools.count()
    heap = [(root.value, next(counter), base_lb, base_ub, root)]
    nodes = 1
    while heap:
        if time_limit is not None and time.monotonic() - start > time_limit and best_x is not None:
            return SolveResult(TIME_LIMIT, best_val, best_x, nodes=nodes, bound=heap[0][0])
        bound, _, lo, hi, res = heapq.heappop(heap)
        if bound >= _cutoff(best_val):
            continue
        xb = res.x[bins]
        frac = np.abs(xb - np.round(xb))
        if np.all(frac <= INT_TOL):
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[bins] = hi2[bins] = np.round(xb)
            fixed = relax(lo2, hi2)
            cand = fixed if fixed.status == OPTIMAL else res
            if cand.value < best_val:
                best_val, best_x = cand.value, cand.x
            continue
        q = int(np.argmax(frac))
        j = int(bins[q])
        for v in (0.0, 1.0):
            lo2, hi2 = lo.copy(), hi.copy()
            lo2[j] = hi2[j] = v
            nodes += 1
            if nodes > max_nodes:
                raise NodeLimitExceeded(f"branch and bound exceeded {max_nodes} nodes")
            child = relax(lo2, hi2)
            if child.status == OPTIMAL and child.value < _cutoff(best_val):
                heapq.heappush(heap, (child.value, next(counter), lo2, hi2, child))
    if best_x is None:
        return SolveResult(INFEASIBLE, nodes=nodes)
    return SolveResult(OPTIMAL, best_val, best_x, nodes=nodes, bound=best_val)


def _cutoff(incumbent: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return incumbent - 1e-9 * max(1.0, abs(incumbent))


def maximize(lp_or_mip, backend: str = "native") -> SolveResult:
    """Maximize by negating the objective; value is reported unnegated."""
    if isinstance(lp_or_mip, MixedIntegerProgram):
        lp = lp_or_mip.lp
        neg = MixedIntegerProgram(LinearProgram(-lp.c, lp.A, lp.senses, lp.b, lp.lb, lp.ub),
                                  lp_or_mip.binaries)
        res = solve_milp(neg, backend)
    else:
        lp = lp_or_mip
        res = solve_lp(LinearProgram(-lp.c, lp.A, lp.senses, lp.b, lp.lb, lp.ub), backend)
    if res.optimal:
        res.value = -res.value
    return res
