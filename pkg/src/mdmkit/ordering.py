"""Binary encodings of the relative order of two disutility levels."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import solver


def diff(plus: dict, minus: dict) -> dict:
    out = dict(plus)
    for j, v in minus.items():
        out[j] = out.get(j, 0.0) - v
    return out


def link(b: solver.LPBuilder, gap: dict, shared: Sequence[tuple], eps: float) -> tuple:
    """Binaries ordering a new node against an existing one.

    ``gap`` is the linear expression D_new - D_old (both in [0, 1]).
    ``shared`` lists (x_new var, x_old) with x_old a var index or a constant.
    Returns (below, above): below = 1 forces D_new < D_old, which in turn
    forces x_new >= x_old; above is the mirror image; both 0 forces equality.
    """
    below = b.var(binary=True)
    above = b.var(binary=True)
    # -below <= gap <= 1 - (1 + eps) below, and the same for -gap
    b.row({**gap, below: 1.0}, solver.GE, 0.0)
    b.row({**gap, below: 1.0 + eps}, solver.LE, 1.0)
    neg = {j: -v for j, v in gap.items()}
    b.row({**neg, above: 1.0}, solver.GE, 0.0)
    b.row({**neg, above: 1.0 + eps}, solver.LE, 1.0)
    b.row({below: 1.0, above: 1.0}, solver.LE, 1.0)
    for x_new, x_old in shared:
        coefs, rhs = {x_new: 1.0}, 0.0
        if isinstance(x_old, tuple):
            rhs = x_old[0]
        else:
            coefs[x_old] = -1.0
        # below - 1 <= x_new - x_old <= 1 - above
        b.row({**coefs, below: -1.0}, solver.GE, rhs - 1.0)
        b.row({**coefs, above: 1.0}, solver.LE, rhs + 1.0)
        # |x_new - x_old| <= below + above
        b.row({**coefs, below: -1.0, above: -1.0}, solver.LE, rhs)
        b.row({**coefs, below: 1.0, above: 1.0}, solver.GE, rhs)
    return below, above


def order_cuts(b: solver.LPBuilder, nodes: Sequence[int], links: dict, cls, above) -> None:
    """Valid inequalities from the order the data already fixes.

    If old node c1 sits above c2, then "new below c2" implies "new below c1"
    and "new above c1" implies "new above c2"; equal nodes share binaries.
    Only covering pairs are added; the rest follow by chaining.
    """
    nodes = list(nodes)
    if len(nodes) < 2:
        return
    sub = above[np.ix_(nodes, nodes)]
    cover = sub & ~((sub.astype(np.int32) @ sub.astype(np.int32)) > 0)
    for a, c1 in enumerate(nodes):
        for z, c2 in enumerate(nodes):
            if cover[a, z]:
                b.row({links[c2][0]: 1.0, links[c1][0]: -1.0}, solver.LE, 0.0)
                b.row({links[c1][1]: 1.0, links[c2][1]: -1.0}, solver.LE, 0.0)
    first = {}
    for c in nodes:
        rep = first.setdefault(cls[c], c)
        if rep != c:
            b.row({links[c][0]: 1.0, links[rep][0]: -1.0}, solver.EQ, 0.0)
            b.row({links[c][1]: 1.0, links[rep][1]: -1.0}, solver.EQ, 0.0)
