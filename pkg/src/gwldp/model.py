"""Multitype Galton-Watson models, typed planar trees and offspring measures.

A configuration ``c`` is a tuple of child type symbols, ordered left to
right; ``()`` is the childless configuration. Offspring measures are sparse
maps over ``(type, configuration)`` atoms.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

Config = tuple  # tuple[str, ...]
Atom = tuple  # (type, Config)

INPUT_TOL = 1e-9
INTERNAL_TOL = 1e-12


class ModelError(ValueError):
    """Base class for rejected model descriptions."""

    code = "invalid_model"


class NonStochasticKernel(ModelError):
    code = "non_stochastic_kernel"


class UnknownType(ModelError):
    code = "unknown_type"


class EmptySupport(ModelError):
    code = "empty_support"


def multiplicity(a: str, c: Config) -> int:
    """Number of children of type ``a`` in configuration ``c``."""
    return sum(1 for x in c if x == a)


@dataclass(frozen=True)
class GWModel:
    alphabet: tuple
    root_law: tuple  # probabilities aligned with alphabet
    kernel: Mapping  # type -> tuple of (Config, prob)
    max_branch: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "max_branch",
            max(len(c) for row in self.kernel.values() for c, _ in row),
        )

    @property
    def k(self) -> int:
        return len(self.alphabet)

    def index(self, a: str) -> int:
        return self._index[a]

    @property
    def _index(self) -> dict:
        idx = self.__dict__.get("_index_cache")
        if idx is None:
            idx = {a: i for i, a in enumerate(self.alphabet)}
            object.__setattr__(self, "_index_cache", idx)
        return idx

    def beta(self, a: str) -> float:
        return self.root_law[self.index(a)]

    def prob(self, a: str, c: Config) -> float:
        for cc, p in self.kernel[a]:
            if cc == c:
                return p
        return 0.0

    def support(self) -> list:
        """All ``(a, c)`` atoms with ``K{c|a} > 0`` in kernel order."""
        return [(a, c) for a in self.alphabet for c, _ in self.kernel[a]]

    def leaf_prob(self, a: str) -> float:
        return self.prob(a, ())

    def with_kernel(self, kernel: Mapping, root_law=None) -> "GWModel":
        return GWModel(self.alphabet, tuple(root_law or self.root_law), kernel)

    def with_root_law(self, root_law) -> "GWModel":
        return GWModel(self.alphabet, tuple(float(x) for x in root_law), self.kernel)

    def to_dict(self) -> dict:
        return {
            "alphabet": list(self.alphabet),
            "root_law": {a: p for a, p in zip(self.alphabet, self.root_law)},
            "kernel": {
                a: [{"children": list(c), "p": p} for c, p in self.kernel[a]]
                for a in self.alphabet
            },
        }


def _as_float(x, what: str) -> float:
    if isinstance(x, bool):
        raise ModelError(f"{what}: expected a number, got {x!r}")
    if isinstance(x, str):
        try:
            x = Decimal(x)
        except InvalidOperation:
            raise ModelError(f"{what}: not a decimal string: {x!r}") from None
    try:
        v = float(x)
    except (TypeError, ValueError):
        raise ModelError(f"{what}: expected a number, got {x!r}") from None
    if not math.isfinite(v) or v < 0:
        raise ModelError(f"{what}: probability must be finite and >= 0, got {v}")
    return v


def _normalize(values: list, what: str, exc=ModelError) -> list:
    s = math.fsum(values)
    if abs(s - 1.0) > INPUT_TOL:
        raise exc(f"{what} sums to {s!r}, not 1")
    return [v / s for v in values]


def validate_model(raw: Mapping) -> GWModel:
    """Build a :class:`GWModel` from an untrusted JSON-like description.

    Probability vectors within ``1e-9`` of summing to one are renormalized;
    anything further off is rejected. Zero-probability configurations are
    dropped from the support.
    """
    if not isinstance(raw, Mapping):
        raise ModelError("model description must be an object")
    try:
        alphabet = tuple(str(a) for a in raw["alphabet"])
        root_raw = raw["root_law"]
        kernel_raw = raw["kernel"]
    except KeyError as e:
        raise ModelError(f"missing field {e.args[0]!r}") from None
    if not alphabet:
        raise ModelError("alphabet must be non-empty")
    if len(set(alphabet)) != len(alphabet):
        raise ModelError("alphabet has duplicate symbols")
    known = set(alphabet)

    if isinstance(root_raw, Mapping):
        for a in root_raw:
            if a not in known:
                raise UnknownType(f"root_law references unknown type {a!r}")
        beta = [_as_float(root_raw.get(a, 0.0), f"root_law[{a}]") for a in alphabet]
    else:
        beta = [_as_float(x, "root_law") for x in root_raw]
        if len(beta) != len(alphabet):
            raise ModelError("root_law length does not match alphabet")
    beta = _normalize(beta, "root_law")

    if not isinstance(kernel_raw, Mapping):
        raise ModelError("kernel must be an object keyed by type")
    for a in kernel_raw:
        if a not in known:
            raise UnknownType(f"kernel row for unknown type {a!r}")
    kernel = {}
    for a in alphabet:
        rows = kernel_raw.get(a) or []
        configs, probs = [], []
        for entry in rows:
            try:
                children = tuple(str(x) for x in entry["children"])
                p_raw = entry["p"]
            except (KeyError, TypeError):
                raise ModelError(f"kernel[{a}] entries need 'children' and 'p'") from None
            for x in children:
                if x not in known:
                    raise UnknownType(f"config {children!r} of type {a!r} uses {x!r}")
            if children in configs:
                raise ModelError(f"duplicate config {children!r} for type {a!r}")
            configs.append(children)
            probs.append(_as_float(p_raw, f"kernel[{a}]"))
        if not configs:
            raise EmptySupport(f"type {a!r} has no offspring configurations")
        probs = _normalize(probs, f"kernel row {a!r}", NonStochasticKernel)
        row = tuple((c, p) for c, p in zip(configs, probs) if p > 0)
        if not row:
            raise EmptySupport(f"type {a!r} has no positive-probability config")
        kernel[a] = row
    return GWModel(alphabet, tuple(beta), kernel)


def load_model(path) -> GWModel:
    with open(path, encoding="utf-8") as fh:
        return validate_model(json.load(fh, parse_float=str))


# -- trees -------------------------------------------------------------------


@dataclass(frozen=True)
class TypedTree:
    """Rooted planar tree stored as its preorder list of ``(type, config)``.

    The preorder sequence determines the planar tree uniquely, so two equal
    ``TypedTree`` objects are the same typed planar tree.
    """

    nodes: tuple

    def __post_init__(self):
        if not self.nodes:
            raise ValueError("a tree has at least one vertex")
        # children of each vertex must be exactly the types that follow it
        pending = [(self.nodes[0][0],)]
        for t, c in self.nodes:
            while pending and not pending[-1]:
                pending.pop()
            if not pending or pending[-1][0] != t:
                raise ValueError("preorder sequence is inconsistent with its configs")
            pending[-1] = pending[-1][1:]
            pending.append(tuple(c))
        while pending and not pending[-1]:
            pending.pop()
        if pending:
            raise ValueError("preorder sequence ends with unexpanded children")

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root_type(self) -> str:
        return self.nodes[0][0]

    @classmethod
    def leaf(cls, a: str) -> "TypedTree":
        return cls(((a, ()),))

    @classmethod
    def from_nested(cls, nested) -> "TypedTree":
        """Parse ``[type, [child, child, ...]]`` nested lists."""
        out = []
        stack = [nested]
        while stack:
            t, kids = stack.pop()
            out.append((str(t), tuple(str(k[0]) for k in kids)))
            stack.extend(reversed(kids))
        return cls(tuple(out))

    def to_nested(self) -> list:
        it = iter(self.nodes)

        def build():
            t, c = next(it)
            return [t, [build() for _ in c]]

        return build()

    @classmethod
    def from_bfs(cls, types: Iterable, configs: Iterable) -> "TypedTree":
        """Build from breadth-first ``types[i]`` and ``configs[i]``."""
        types, configs = list(types), list(configs)
        kids, nxt = [], 1
        for c in configs:
            kids.append(range(nxt, nxt + len(c)))
            nxt += len(c)
        out, stack = [], [0]
        while stack:
            v = stack.pop()
            out.append((types[v], tuple(configs[v])))
            stack.extend(reversed(kids[v]))
        return cls(tuple(out))

    def is_consistent(self, model: GWModel) -> bool:
        return all(model.prob(t, c) > 0 for t, c in self.nodes)

    def log_probability(self, model: GWModel) -> float:
        """``log beta(root) + sum_v log K{C(v)|Y(v)}``; ``-inf`` off support."""
        parts = [model.beta(self.root_type)]
        parts.extend(model.prob(t, c) for t, c in self.nodes)
        if min(parts) <= 0:
            return -math.inf
        return math.fsum(math.log(p) for p in parts)


# -- measures ----------------------------------------------------------------


class OffspringMeasure(Mapping):
    """Nonnegative weights on ``(type, config)`` atoms, zero off support."""

    __slots__ = ("_w",)

    def __init__(self, weights: Mapping | Iterable = ()):
        w = {}
        items = weights.items() if isinstance(weights, Mapping) else weights
        for (a, c), v in items:
            v = float(v)
            if not v >= 0 or not math.isfinite(v):
                raise ValueError(f"measure weight at {(a, c)!r} must be finite and >= 0")
            if v:
                key = (a, tuple(c))
                w[key] = w.get(key, 0.0) + v
        self._w = w

    def __getitem__(self, key):
        a, c = key
        return self._w.get((a, tuple(c)), 0.0)

    def __iter__(self) -> Iterator:
        return iter(self._w)

    def __len__(self) -> int:
        return len(self._w)

    def __contains__(self, key) -> bool:
        return (key[0], tuple(key[1])) in self._w

    def __repr__(self) -> str:
        return f"OffspringMeasure({self._w!r})"

    def __eq__(self, other) -> bool:
        if isinstance(other, OffspringMeasure):
            return self._w == other._w
        return NotImplemented

    def __hash__(self):
        return hash(frozenset(self._w.items()))

    def total(self) -> float:
        return math.fsum(self._w.values())

    def is_probability(self, tol: float = INTERNAL_TOL) -> bool:
        return abs(self.total() - 1.0) <= tol

    def scale(self, alpha: float) -> "OffspringMeasure":
        return OffspringMeasure({k: alpha * v for k, v in self._w.items()})

    def __add__(self, other: "OffspringMeasure") -> "OffspringMeasure":
        w = dict(self._w)
        for k, v in other.items():
            w[k] = w.get(k, 0.0) + v
        return OffspringMeasure(w)

    def __rmul__(self, alpha: float) -> "OffspringMeasure":
        return self.scale(alpha)

    def pair(self, g: Mapping) -> float:
        """``<g, rho>`` with ``g`` defaulting to zero off its support."""
        return math.fsum(v * g.get(k, 0.0) for k, v in self._w.items())

    def l1_distance(self, other: "OffspringMeasure") -> float:
        keys = set(self._w) | set(other)
        return math.fsum(abs(self[k] - other[k]) for k in keys)

    def conditional(self, a: str) -> dict:
        """``config -> rho(a, c) / rho_1(a)``; empty when ``a`` carries no mass."""
        row = {c: v for (t, c), v in self._w.items() if t == a}
        s = math.fsum(row.values())
        return {c: v / s for c, v in row.items()} if s > 0 else {}


def empirical_offspring_measure(y: TypedTree) -> OffspringMeasure:
    n = len(y)
    return OffspringMeasure({k: m / n for k, m in Counter(y.nodes).items()})


def plain_marginal(rho: OffspringMeasure, alphabet) -> np.ndarray:
    idx = {a: i for i, a in enumerate(alphabet)}
    out = [[] for _ in alphabet]
    for (a, _), v in rho.items():
        out[idx[a]].append(v)
    return np.array([math.fsum(x) for x in out])


def offspring_intensity(rho: OffspringMeasure, alphabet) -> np.ndarray:
    idx = {a: i for i, a in enumerate(alphabet)}
    out = [[] for _ in alphabet]
    for (_, c), v in rho.items():
        for x in c:
            out[idx[x]].append(v)
    return np.array([math.fsum(x) for x in out])


def shift_invariance_defect(rho: OffspringMeasure, alphabet) -> float:
    d = plain_marginal(rho, alphabet) - offspring_intensity(rho, alphabet)
    return math.fsum(abs(d))


# -- text encodings used by the CLI --------------------------------------------


def atom_key(a: str, c: Config) -> str:
    return f"({a}|{','.join(c)})"


def parse_atom_key(key: str) -> Atom:
    s = key.strip()
    if not (s.startswith("(") and s.endswith(")") and "|" in s):
        raise ValueError(f"bad atom key {key!r}; expected '(a|b,c)'")
    a, rest = s[1:-1].split("|", 1)
    c = tuple(x.strip() for x in rest.split(",")) if rest.strip() else ()
    return a.strip(), c


def measure_from_json(obj: Mapping) -> OffspringMeasure:
    return OffspringMeasure({parse_atom_key(k): float(v) for k, v in obj.items()})


def measure_to_json(rho: Mapping, order: Iterable | None = None) -> dict:
    keys = list(order) if order is not None else sorted(rho)
    return {atom_key(a, c): rho[(a, c)] for a, c in keys if rho.get((a, c), 0.0)}


def bundled_model_path(name: str) -> Path:
    return Path(__file__).parent / "models" / f"{name}.json"


def bundled_model(name: str) -> GWModel:
    return load_model(bundled_model_path(name))


BUNDLED = ("binary", "ternary", "two_type", "mixed")
