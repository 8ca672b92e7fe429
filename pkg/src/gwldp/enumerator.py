"""Exact oracles: size distributions, tree censuses and event probabilities.

All recursions run over configuration *prefixes*: for a config
``(b1, ..., bk)`` the forest of its first ``j`` subtrees has a size series
``R_j = R_{j-1} * P_{b_j}``, and a tree rooted at ``a`` of size ``n`` is a
config of ``a`` followed by a forest of size ``n - 1``. Coefficients are
filled in increasing degree, so each step only reads known values.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass

import numpy as np

from .model import GWModel, OffspringMeasure, TypedTree, empirical_offspring_measure

DEFAULT_BUDGET = 10**7
LOG_DOMAIN_BELOW = 1e-12


class BudgetExceeded(RuntimeError):
    code = "budget_exceeded"

    def __init__(self, predicted: int, budget: int):
        super().__init__(f"census of {predicted} trees exceeds budget {budget}")
        self.predicted = predicted
        self.budget = budget


class ImpossibleSize(ValueError):
    code = "impossible_size"


def enumeration_budget() -> int:
    return int(os.environ.get("GWLDP_BUDGET", DEFAULT_BUDGET))


def _prefixes(model: GWModel) -> list:
    out = {()}
    for a in model.alphabet:
        for c, _ in model.kernel[a]:
            out.update(c[:j] for j in range(1, len(c) + 1))
    return sorted(out, key=lambda p: (len(p), p))


def _size_table(model: GWModel, n_max: int, exact: bool):
    """``table[a][n]``: total weight of trees rooted at ``a`` with ``n`` vertices.

    With ``exact`` every supported config weighs 1 (integer counts);
    otherwise configs weigh ``K{c|a}``.
    """
    prefixes = _prefixes(model)
    P = {a: [0] * (n_max + 1) for a in model.alphabet}
    R = {pre: [] for pre in prefixes}
    for n in range(1, n_max + 1):
        d = n - 1
        for pre in prefixes:
            if not pre:
                R[pre].append(1 if d == 0 else 0)
                continue
            parent, b = R[pre[:-1]], P[pre[-1]]
            terms = [parent[m] * b[d - m] for m in range(d) if parent[m] and b[d - m]]
            R[pre].append(sum(terms) if exact else math.fsum(terms))
        for a in model.alphabet:
            if exact:
                P[a][n] = sum(R[c][d] for c, _ in model.kernel[a])
            else:
                P[a][n] = math.fsum(p * R[c][d] for c, p in model.kernel[a])
    return P


@dataclass(frozen=True)
class SizeDistribution:
    alphabet: tuple
    p: np.ndarray  # p[i, n], n = 0..n_max (column 0 is zero)
    q: np.ndarray

    @property
    def n_max(self) -> int:
        return self.p.shape[1] - 1

    def rooted(self, a: str, n: int) -> float:
        return float(self.p[self.alphabet.index(a), n])


def exact_size_distribution(model: GWModel, n_max: int) -> SizeDistribution:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    P = _size_table(model, n_max, exact=False)
    p = np.array([P[a] for a in model.alphabet], dtype=float)
    q = np.array(
        [math.fsum(b * p[i, n] for i, b in enumerate(model.root_law)) for n in range(n_max + 1)]
    )
    return SizeDistribution(model.alphabet, p, q)


def count_table(model: GWModel, n_max: int) -> list:
    """Support-consistent tree counts for every ``n <= n_max`` (index 0 unused)."""
    P = _size_table(model, n_max, exact=True)
    roots = [a for a, b in zip(model.alphabet, model.root_law) if b > 0]
    return [sum(P[a][n] for a in roots) for n in range(n_max + 1)]


def count_census(model: GWModel, n: int) -> int:
    return count_table(model, n)[n]


@dataclass(frozen=True)
class CensusEntry:
    tree: TypedTree
    probability: float
    measure: OffspringMeasure


@dataclass(frozen=True)
class TreeCensus:
    n: int
    entries: tuple
    total_probability: float

    def __len__(self) -> int:
        return len(self.entries)


def enumerate_trees(model: GWModel, n: int, budget: int | None = None) -> TreeCensus:
    """Every support-consistent typed planar tree with ``n`` vertices."""
    budget = enumeration_budget() if budget is None else budget
    predicted = count_census(model, n)
    if predicted > budget:
        raise BudgetExceeded(predicted, budget)
    counts = _size_table(model, n, exact=True)
    # tiny kernel entries: multiply in log space to avoid underflow
    use_log = min(p for a in model.alphabet for _, p in model.kernel[a]) < LOG_DOMAIN_BELOW
    memo: dict = {}

    def subtrees(a, m):
        # list of (preorder nodes, probability or log probability without the root law)
        key = (a, m)
        if key in memo:
            return memo[key]
        out = []
        if counts[a][m]:
            for c, p in model.kernel[a]:
                for sizes in _compositions(m - 1, c, counts):
                    for parts in itertools.product(*(subtrees(b, s) for b, s in zip(c, sizes))):
                        nodes = ((a, c),) + tuple(itertools.chain.from_iterable(x[0] for x in parts))
                        if use_log:
                            w = math.log(p) + math.fsum(x[1] for x in parts)
                        else:
                            w = p
                            for x in parts:
                                w *= x[1]
                        out.append((nodes, w))
        memo[key] = out
        return out

    entries = []
    for a, beta in zip(model.alphabet, model.root_law):
        if beta <= 0:
            continue
        for nodes, w in subtrees(a, n):
            tree = TypedTree(nodes)
            prob = math.exp(math.log(beta) + w) if use_log else beta * w
            entries.append(CensusEntry(tree, prob, empirical_offspring_measure(tree)))
    total = math.fsum(e.probability for e in entries)
    return TreeCensus(n, tuple(entries), total)


def _compositions(total, config, counts):
    """Ordered size tuples for the subtrees of ``config`` summing to ``total``."""
    k = len(config)
    if k == 0:
        if total == 0:
            yield ()
        return

    def rec(j, left, acc):
        if j == k - 1:
            if left >= 1 and counts[config[j]][left]:
                yield acc + (left,)
            return
        for s in range(1, left - (k - 1 - j) + 1):
            if counts[config[j]][s]:
                yield from rec(j + 1, left - s, acc + (s,))

    yield from rec(0, total, ())


# -- aggregated census over empirical offspring measures -----------------------


def measure_distribution(model: GWModel, n: int) -> dict:
    """Joint law of ``(|V| = n, M_y)`` summed over trees sharing ``M_y``.

    Returns ``{profile: probability}`` where ``profile`` is a tuple of
    vertex counts aligned with ``model.support()``. Probabilities are
    unconditioned: they sum to ``q[n]``.
    """
    support = model.support()
    idx = {atom: i for i, atom in enumerate(support)}
    dim = len(support)
    zero = (0,) * dim
    prefixes = _prefixes(model)
    P = {a: [dict() for _ in range(n + 1)] for a in model.alphabet}
    R = {pre: [] for pre in prefixes}
    for m in range(1, n + 1):
        d = m - 1
        for pre in prefixes:
            if not pre:
                R[pre].append({zero: 1.0} if d == 0 else {})
                continue
            parent, b = R[pre[:-1]], P[pre[-1]]
            acc: dict = {}
            for s in range(d):
                left, right = parent[s], b[d - s]
                if not left or not right:
                    continue
                for pa, wa in left.items():
                    for pb, wb in right.items():
                        key = tuple(x + y for x, y in zip(pa, pb))
                        acc[key] = acc.get(key, 0.0) + wa * wb
            R[pre].append(acc)
        for a in model.alphabet:
            out: dict = {}
            for c, p in model.kernel[a]:
                i = idx[(a, c)]
                for prof, w in R[c][d].items():
                    key = prof[:i] + (prof[i] + 1,) + prof[i + 1:]
                    out[key] = out.get(key, 0.0) + p * w
            P[a][m] = out
    joint: dict = {}
    for a, beta in zip(model.alphabet, model.root_law):
        if beta <= 0:
            continue
        for prof, w in P[a][n].items():
            joint[prof] = joint.get(prof, 0.0) + beta * w
    return joint


def profile_measure(model: GWModel, profile, n: int | None = None) -> OffspringMeasure:
    n = n if n is not None else sum(profile)
    return OffspringMeasure({atom: k / n for atom, k in zip(model.support(), profile) if k})


def exact_event_probability(model: GWModel, n: int, B, method: str = "profile") -> float:
    """``P_n{M_y in B}``; ``B`` supports ``measure in B``.

    ``method="census"`` sums over the materialized census instead of the
    aggregated measure distribution; both are exact.
    """
    if method == "census":
        census = enumerate_trees(model, n)
        if census.total_probability <= 0:
            raise ImpossibleSize(f"P{{|V| = {n}}} = 0")
        hit = math.fsum(e.probability for e in census.entries if e.measure in B)
        return min(1.0, hit / census.total_probability)
    joint = measure_distribution(model, n)
    total = math.fsum(joint.values())
    if total <= 0:
        raise ImpossibleSize(f"P{{|V| = {n}}} = 0")
    hit = math.fsum(w for prof, w in joint.items() if profile_measure(model, prof, n) in B)
    return min(1.0, hit / total)
