"""Domain types, validation and serialization for choice data.

Products are numbered 1..n.  Each assortment is stored as a sorted tuple of
product ids and its probability row is aligned with that order.
"""

from __future__ import annotations

import csv
import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidDataset, InvalidGrouping

PROB_TOL = 1e-9
ZERO_TOL = 1e-12


def is_zero(p: float) -> bool:
    return p <= ZERO_TOL


def same_prob(p: float, q: float) -> bool:
    return abs(p - q) <= PROB_TOL


@dataclass(frozen=True)
class Violation:
    kind: str
    assortment: int | None = None
    product: int | None = None
    message: str = ""


class Structure(str, enum.Enum):
    NESTED = "Nested"
    LAMINAR = "Laminar"
    GENERAL = "General"


@dataclass(frozen=True)
class ChoiceDataset:
    """Observed choice probabilities over a collection of assortments.

    ``probs[k]`` lists p_{i,S_k} for the products of ``assortments[k]`` in
    ascending id order.  Weights default to 1.
    """

    n: int
    assortments: tuple
    probs: tuple
    weights: tuple = field(default=None)

    def __post_init__(self):
        assortments = []
        probs = []
        for S, row in zip(self.assortments, self.probs):
            S = [int(i) for i in S]
            row = [float(p) for p in row]
            if len(S) == len(row):
                order = sorted(range(len(S)), key=lambda a: S[a])
                S = [S[a] for a in order]
                row = [row[a] for a in order]
            assortments.append(tuple(S))
            probs.append(tuple(row))
        if len(self.assortments) != len(self.probs):
            raise InvalidDataset("assortments and probs have different lengths")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "assortments", tuple(assortments))
        object.__setattr__(self, "probs", tuple(probs))
        if self.weights is None:
            w = tuple(1.0 for _ in assortments)
        else:
            w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)

    @property
    def m(self) -> int:
        return len(self.assortments)

    @property
    def products(self) -> range:
        return range(1, self.n + 1)

    @cached_property
    def _position(self) -> tuple:
        return tuple({i: a for a, i in enumerate(S)} for S in self.assortments)

    @cached_property
    def sets(self) -> tuple:
        return tuple(frozenset(S) for S in self.assortments)

    @cached_property
    def containing(self) -> dict:
        """product -> list of assortment indices holding it."""
        out = {i: [] for i in self.products}
        for k, S in enumerate(self.assortments):
            for i in S:
                out.setdefault(i, []).append(k)
        return out

    def prob(self, i: int, k: int) -> float:
        return self.probs[k][self._position[k][i]]

    def entries(self) -> list:
        """All observed (product, assortment index, probability) triples."""
        return [(i, k, p) for k, S in enumerate(self.assortments) for i, p in zip(S, self.probs[k])]

    def index_of(self, S: Iterable[int]) -> int | None:
        key = frozenset(S)
        for k, T in enumerate(self.sets):
            if T == key:
                return k
        return None

    def with_probs(self, probs: Sequence[Sequence[float]]) -> "ChoiceDataset":
        return ChoiceDataset(self.n, self.assortments, probs, self.weights)

    def subset(self, indices: Sequence[int]) -> "ChoiceDataset":
        return ChoiceDataset(
            self.n,
            [self.assortments[k] for k in indices],
            [self.probs[k] for k in indices],
            [self.weights[k] for k in indices],
        )

    def to_dict(self) -> dict:
        d = {"n": self.n, "assortments": [list(S) for S in self.assortments],
             "probs": [list(r) for r in self.probs]}
        if any(w != 1.0 for w in self.weights):
            d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChoiceDataset":
        try:
            return cls(d["n"], d["assortments"], d["probs"], d.get("weights"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDataset(f"malformed dataset: {exc}") from exc

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "ChoiceDataset":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidDataset(f"malformed JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise InvalidDataset("dataset JSON must be an object")
        return cls.from_dict(d)


def load_dataset(path) -> ChoiceDataset:
    return ChoiceDataset.from_json(Path(path).read_text(encoding="utf-8"))


def save_dataset(dataset: ChoiceDataset, path) -> None:
    Path(path).write_text(dataset.to_json(indent=2), encoding="utf-8")


def _read_sidecar(path) -> dict:
    path = Path(path)
    if path.suffix.lower() == ".json":
        raw = json.loads(path.read_text(encoding="utf-8"))
        return {str(k): [int(i) for i in v] for k, v in raw.items()}
    out = {}
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "assortment_id":
                continue
            items = " ".join(row[1:]).replace(";", " ").split()
            out[row[0].strip()] = [int(i) for i in items]
    return out


def read_transactions(path, sidecar_path, n: int | None = None) -> ChoiceDataset:
    """Aggregate ``assortment_id,chosen_product`` rows into frequencies.

    The sidecar maps each assortment id to its product list, either as JSON
    (``{"id": [1, 2]}``) or CSV rows ``id,1 2 3``.
    """
    offered = _read_sidecar(sidecar_path)
    counts = defaultdict(Counter)
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "assortment_id":
                continue
            aid, chosen = row[0].strip(), int(row[1])
            if aid not in offered:
                raise InvalidDataset(f"assortment id {aid!r} missing from sidecar")
            if chosen not in offered[aid]:
                raise InvalidDataset(f"product {chosen} not offered in assortment {aid!r}")
            counts[aid][chosen] += 1
    if n is None:
        n = max(i for S in offered.values() for i in S)
    assortments, probs, weights = [], [], []
    for aid in offered:
        total = sum(counts[aid].values())
        if total == 0:
            continue
        S = sorted(offered[aid])
        assortments.append(S)
        probs.append([counts[aid][i] / total for i in S])
        weights.append(float(total))
    return ChoiceDataset(n, assortments, probs, weights)


def validate(dataset: ChoiceDataset) -> list:
    out = []
    if dataset.n < 1:
        out.append(Violation("InvalidProductCount", message=f"n={dataset.n}"))
    seen = {}
    for k, (S, row) in enumerate(zip(dataset.assortments, dataset.probs)):
        if len(S) != len(row):
            out.append(Violation("RowLengthMismatch", k, message=f"{len(S)} products, {len(row)} probs"))
            continue
        if len(S) < 2:
            out.append(Violation("AssortmentTooSmall", k))
        if len(set(S)) != len(S):
            out.append(Violation("RepeatedProduct", k))
        for i, p in zip(S, row):
            if not 1 <= i <= dataset.n:
                out.append(Violation("ProductOutOfRange", k, i))
            if not (-PROB_TOL <= p <= 1 + PROB_TOL) or p != p:
                out.append(Violation("ProbabilityOutOfRange", k, i, f"p={p}"))
        total = sum(row)
        if abs(total - 1.0) > PROB_TOL:
            out.append(Violation("NormalizationViolation", k, message=f"row sums to {total:.12g}"))
        key = frozenset(S)
        if key in seen:
            out.append(Violation("DuplicateAssortment", k, message=f"same as assortment {seen[key]}"))
        else:
            seen[key] = k
    if len(dataset.weights) != dataset.m:
        out.append(Violation("WeightLengthMismatch"))
    for k, w in enumerate(dataset.weights):
        if not w >= 0:
            out.append(Violation("NegativeWeight", k, message=f"w={w}"))
    return out


def ensure_valid(dataset: ChoiceDataset) -> None:
    problems = validate(dataset)
    if problems:
        raise InvalidDataset("; ".join(f"{v.kind}@{v.assortment}" for v in problems[:5]))


def comparable_pairs(dataset: ChoiceDataset) -> list:
    """(i, k, l) with k < l and product i in both assortments k and l."""
    out = []
    for k in range(dataset.m):
        for l in range(k + 1, dataset.m):
            for i in sorted(dataset.sets[k] & dataset.sets[l]):
                out.append((i, k, l))
    return out


def overlapping_pairs(dataset: ChoiceDataset) -> list:
    """Unordered assortment index pairs (k, l), k < l, sharing a product."""
    return [(k, l) for k in range(dataset.m) for l in range(k + 1, dataset.m)
            if dataset.sets[k] & dataset.sets[l]]


def structure_of(sets: Sequence[frozenset]) -> Structure:
    nested = laminar = True
    for a in range(len(sets)):
        for b in range(a + 1, len(sets)):
            S, T = sets[a], sets[b]
            comparable = S <= T or T <= S
            if not comparable:
                nested = False
                if S & T:
                    laminar = False
                    return Structure.GENERAL
    if nested:
        return Structure.NESTED
    return Structure.LAMINAR if laminar else Structure.GENERAL


def collection_structure(dataset: ChoiceDataset) -> Structure:
    return structure_of(dataset.sets)


def tie_levels(items: Sequence[tuple]) -> list:
    """Group (key, value) items into ascending value levels.

    Zero values form their own level.  Positive values are split wherever two
    consecutive sorted values differ by more than the equality tolerance.
    Returns a list of (value, keys, is_zero_level).
    """
    items = sorted(items, key=lambda kv: kv[1])
    levels = []
    for key, v in items:
        zero = is_zero(v)
        if levels and levels[-1][2] == zero and (zero or v - levels[-1][3] <= PROB_TOL):
            levels[-1][1].append(key)
            levels[-1][3] = v
        else:
            levels.append([v, [key], zero, v])
    return [(lv[0], lv[1], lv[2]) for lv in levels]


def chain_constraints(levels: Sequence[tuple]) -> tuple:
    """Reduce the order of value levels to a minimal constraint set.

    A smaller value must sit strictly above (larger disutility) every larger
    value; equal positive values must coincide.  Returns (strict, equal) with
    strict pairs (above, below).
    """
    strict, equal = [], []
    for idx, (_, keys, zero) in enumerate(levels):
        if not zero:
            for key in keys[1:]:
                equal.append((keys[0], key))
        if idx + 1 < len(levels):
            below = levels[idx + 1][1][0]
            tops = keys if zero else keys[:1]
            for key in tops:
                strict.append((key, below))
    return strict, equal


def product_levels(dataset: ChoiceDataset) -> dict:
    return {i: tie_levels([(k, dataset.prob(i, k)) for k in ks])
            for i, ks in dataset.containing.items() if ks}


def mdm_relations(dataset: ChoiceDataset) -> tuple:
    """Strict (above, below) and equal assortment pairs induced by the data."""
    strict, equal = set(), set()
    for levels in product_levels(dataset).values():
        s, e = chain_constraints(levels)
        strict.update(s)
        equal.update(tuple(sorted(p)) for p in e)
    return sorted(strict), sorted(equal)



def forced_order(count: int, strict: Sequence[tuple], equal: Sequence[tuple]) -> tuple:
    """Transitive consequences of strict (above, below) and equal relations.

    Returns (cls, above) where cls[a] labels the equality class of node a and
    above[a, b] is True when every solution has node a strictly above node b.
    """
    parent = list(range(count))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in equal:
        parent[find(a)] = find(b)
    cls = [find(a) for a in range(count)]
    reach = np.zeros((count, count), dtype=bool)
    for a, b in strict:
        reach[cls[a], cls[b]] = True
    for k in range(count):
        reach |= np.outer(reach[:, k], reach[k])
    above = reach[np.ix_(cls, cls)]
    return cls, above


@dataclass(frozen=True)
class Grouping:
    """Group id (1..K) for each product 1..n, stored in product order."""

    assignment: tuple

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(g) for g in self.assignment))

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def K(self) -> int:
        return len(set(self.assignment))

    def group(self, i: int) -> int:
        return self.assignment[i - 1]

    def groups(self) -> list:
        out = defaultdict(list)
        for i, g in enumerate(self.assignment, start=1):
            out[g].append(i)
        return [out[g] for g in sorted(out)]

    @classmethod
    def singletons(cls, n: int) -> "Grouping":
        return cls(range(1, n + 1))

    @classmethod
    def single(cls, n: int) -> "Grouping":
        return cls([1] * n)

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[int]], n: int) -> "Grouping":
        assignment = [0] * n
        for g, members in enumerate(groups, start=1):
            for i in members:
                if not 1 <= i <= n or assignment[i - 1]:
                    raise InvalidGrouping(f"product {i} misplaced")
                assignment[i - 1] = g
        if 0 in assignment:
            raise InvalidGrouping("every product needs a group")
        return cls(assignment)

    @classmethod
    def from_labels(cls, labels: Sequence) -> "Grouping":
        """Relabel arbitrary cluster labels to contiguous ids by first use."""
        ids = {}
        return cls([ids.setdefault(lab, len(ids) + 1) for lab in labels])

    def check(self, n: int | None = None) -> None:
        if n is not None and self.n != n:
            raise InvalidGrouping(f"grouping covers {self.n} products, dataset has {n}")
        ids = sorted(set(self.assignment))
        if ids != list(range(1, len(ids) + 1)):
            raise InvalidGrouping(f"group ids must be contiguous from 1, got {ids}")

    def to_dict(self) -> dict:
        return {"assignment": list(self.assignment), "groups": self.groups()}

    @classmethod
    def from_dict(cls, d) -> "Grouping":
        if isinstance(d, list):
            return cls(d)
        if "assignment" in d:
            return cls(d["assignment"])
        groups = d["groups"]
        return cls.from_groups(groups, d.get("n", sum(len(g) for g in groups)))


@dataclass(frozen=True)
class MdmCertificate:
    lam: tuple
    epsilon: float

    def verify(self, dataset: ChoiceDataset, tol: float = 1e-9) -> bool:
        if not self.epsilon > 0 or len(self.lam) != dataset.m:
            return False
        for i, k, l in comparable_pairs(dataset):
            p, q = dataset.prob(i, k), dataset.prob(i, l)
            if same_prob(p, q):
                if not is_zero(p) and abs(self.lam[k] - self.lam[l]) > tol:
                    return False
            elif p < q and self.lam[k] < self.lam[l] + self.epsilon - tol:
                return False
            elif q < p and self.lam[l] < self.lam[k] + self.epsilon - tol:
                return False
        return True

    def to_dict(self) -> dict:
        return {"lambda": list(self.lam), "epsilon": self.epsilon}


@dataclass(frozen=True)
class GmdmCertificate:
    lam: tuple
    nu: tuple
    epsilon: float

    def verify(self, dataset: ChoiceDataset, grouping: Grouping, tol: float = 1e-9) -> bool:
        if not self.epsilon > 0:
            return False
        entries = dataset.entries()
        for a in range(len(entries)):
            i, k, p = entries[a]
            u = self.lam[k] - self.nu[i - 1]
            for b in range(a + 1, len(entries)):
                j, l, q = entries[b]
                if grouping.group(i) != grouping.group(j):
                    continue
                v = self.lam[l] - self.nu[j - 1]
                if same_prob(p, q):
                    if not is_zero(p) and abs(u - v) > tol:
                        return False
                elif p < q and u < v + self.epsilon - tol:
                    return False
                elif q < p and v < u + self.epsilon - tol:
                    return False
        return True

    def to_dict(self) -> dict:
        return {"lambda": list(self.lam), "nu": list(self.nu), "epsilon": self.epsilon}


@dataclass(frozen=True)
class LossSpec:
    """Weighted L1 loss: sum_S w_S sum_i |p_{i,S} - x_{i,S}|."""

    kind: str = "WeightedL1"

    def __post_init__(self):
        if self.kind != "WeightedL1":
            raise ValueError(f"unsupported loss {self.kind!r}")

    def __call__(self, dataset: ChoiceDataset, fitted: Sequence[Sequence[float]]) -> float:
        return sum(w * sum(abs(p - x) for p, x in zip(row, xrow))
                   for w, row, xrow in zip(dataset.weights, dataset.probs, fitted))


WEIGHTED_L1 = LossSpec()
