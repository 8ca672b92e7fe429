"""Random multitype Galton-Watson trees: plain, size-conditioned and tilted.

The growth loop lives in :mod:`gwldp._backend` (compiled when available).
Every draw consumes one uniform for the root type and one per expanded
vertex, in breadth-first order, so results only depend on the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple

import numpy as np
from scipy.special import logsumexp

from . import _backend
from .enumerator import ImpossibleSize, exact_size_distribution
from .model import GWModel, OffspringMeasure, TypedTree
from .spectral import TestFunction, analyze

DEFAULT_CAP = 10**6


class Exhausted(RuntimeError):
    code = "exhausted"

    def __init__(self, n, attempts, acceptance):
        super().__init__(
            f"no tree of size {n} in {attempts} attempts (acceptance {acceptance:.3e})"
        )
        self.n = n
        self.attempts = attempts
        self.acceptance = acceptance


@dataclass(frozen=True)
class Overflow:
    """A draw that grew past ``cap`` vertices before finishing."""

    cap: int


class RandomSource:
    """Seeded PCG64 stream. Not safe to share across concurrent draws."""

    algorithm = "PCG64"

    def __init__(self, seed: int, stream: int | None = None):
        self.seed = int(seed)
        self.stream = stream
        entropy = self.seed if stream is None else [self.seed, int(stream)]
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, stream={self.stream}, algorithm={self.algorithm!r})"


@dataclass(frozen=True)
class KernelTables:
    alphabet: tuple
    configs: tuple  # configs[t][j]
    root_cum: np.ndarray
    cum: np.ndarray
    nconf: np.ndarray
    clen: np.ndarray
    coff: np.ndarray
    child_types: np.ndarray

    @classmethod
    def from_model(cls, model: GWModel) -> "KernelTables":
        idx = {a: i for i, a in enumerate(model.alphabet)}
        k = model.k
        width = max(len(model.kernel[a]) for a in model.alphabet)
        cum = np.full((k, width), 2.0)
        nconf = np.zeros(k, dtype=np.int32)
        clen = np.zeros((k, width), dtype=np.int32)
        coff = np.zeros((k, width), dtype=np.int32)
        flat, configs = [], []
        for t, a in enumerate(model.alphabet):
            row = model.kernel[a]
            nconf[t] = len(row)
            cum[t, : len(row)] = np.cumsum([p for _, p in row])
            for j, (c, _) in enumerate(row):
                clen[t, j] = len(c)
                coff[t, j] = len(flat)
                flat.extend(idx[x] for x in c)
            configs.append(tuple(c for c, _ in row))
        return cls(
            model.alphabet,
            tuple(configs),
            np.cumsum(model.root_law),
            cum,
            nconf,
            clen,
            coff,
            np.array(flat or [0], dtype=np.int32),
        )

    def measure(self, types, cfgs) -> OffspringMeasure:
        """Empirical offspring measure straight from breadth-first arrays."""
        width = self.cum.shape[1]
        counts = np.bincount(np.asarray(types) * width + np.asarray(cfgs))
        n = len(types)
        return OffspringMeasure(
            {
                (self.alphabet[i // width], self.configs[i // width][i % width]): k / n
                for i, k in enumerate(counts.tolist())
                if k
            }
        )

    def tree(self, types, cfgs) -> TypedTree:
        return TypedTree.from_bfs(
            (self.alphabet[t] for t in types),
            (self.configs[t][j] for t, j in zip(types, cfgs)),
        )


def _tables(model: GWModel) -> KernelTables:
    cached = model.__dict__.get("_tables_cache")
    if cached is None:
        cached = KernelTables.from_model(model)
        object.__setattr__(model, "_tables_cache", cached)
    return cached


def grow_raw(model: GWModel, rng: RandomSource, cap: int = DEFAULT_CAP, kernels=None):
    """One draw as breadth-first ``(types, config indices)`` arrays, or ``None``."""
    kernels = kernels or _backend.kernels
    types = np.empty(cap, dtype=np.int32)
    cfgs = np.empty(cap, dtype=np.int32)
    size = kernels.grow(rng.generator, _tables(model), cap, types, cfgs)
    if size < 0:
        return None
    return types[:size], cfgs[:size]


def sample_tree(model: GWModel, rng: RandomSource, cap: int = DEFAULT_CAP, kernels=None):
    """Unconditioned draw from the model; :class:`Overflow` past ``cap``."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    raw = grow_raw(model, rng, cap, kernels)
    if raw is None:
        return Overflow(cap)
    return _tables(model).tree(*raw)


def sample_sizes(model: GWModel, rng: RandomSource, count: int, cap: int = DEFAULT_CAP, kernels=None):
    """Sizes of ``count`` draws; ``-1`` marks an overflow."""
    kernels = kernels or _backend.kernels
    tables = _tables(model)
    types = np.empty(cap, dtype=np.int32)
    cfgs = np.empty(cap, dtype=np.int32)
    return np.array([kernels.grow(rng.generator, tables, cap, types, cfgs) for _ in range(count)])


def _acceptance(model: GWModel, n: int) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    q = float(exact_size_distribution(model, n).q[n])
    if q <= 0:
        raise ImpossibleSize(f"P{{|V| = {n}}} = 0 under this model")
    return q


def _grow_sized(model, n, rng, max_attempts, q, kernels):
    kernels = kernels or _backend.kernels
    if max_attempts is None:
        max_attempts = max(100, math.ceil(100 / q))
    types = np.empty(n, dtype=np.int32)
    cfgs = np.empty(n, dtype=np.int32)
    used = kernels.grow_sized(rng.generator, _tables(model), n, max_attempts, types, cfgs)
    if used < 0:
        raise Exhausted(n, max_attempts, q)
    return types, cfgs


def sample_conditioned(model, n, rng, max_attempts=None, kernels=None) -> TypedTree:
    """Exact draw from the law conditioned on ``|V| = n`` (rejection)."""
    q = _acceptance(model, n)
    return _tables(model).tree(*_grow_sized(model, n, rng, max_attempts, q, kernels))


def iter_conditioned(model, n, rng, count, max_attempts=None, kernels=None):
    q = _acceptance(model, n)
    tables = _tables(model)
    for _ in range(count):
        yield tables.tree(*_grow_sized(model, n, rng, max_attempts, q, kernels))


# -- exponential tilting -------------------------------------------------------


@dataclass(frozen=True)
class TiltedModel:
    """Kernel reweighted by ``exp(g)`` and renormalized per parent type.

    ``model`` is the tilted model itself (usable by the samplers and the
    size DP); ``weights[t][j] = u(a) - g(a, c)`` is the per-vertex
    log likelihood ratio ``log K{c|a} - log K~{c|a}``.
    """

    base: GWModel
    g: TestFunction
    log_norm: Mapping
    model: GWModel
    weights: tuple
    log_root_ratio: tuple  # log beta(a) - log beta~(a)

    def kernel(self, a: str) -> tuple:
        return self.model.kernel[a]


def tilt(model: GWModel, g: Mapping, root_law="base") -> TiltedModel:
    """``K~{c|a} = exp(g(a,c) - u(a)) K{c|a}``, ``u(a) = log sum_c exp(g) K``.

    ``root_law`` is ``"base"`` (keep beta), ``"pi"`` (Perron eigenvector) or
    an explicit vector.
    """
    g = TestFunction({k: float(v) for k, v in g.items()})
    log_norm, kernel, weights = {}, {}, []
    for a in model.alphabet:
        row = model.kernel[a]
        gv = np.array([g.get((a, c), 0.0) for c, _ in row])
        logk = np.log([p for _, p in row])
        u = float(logsumexp(gv + logk))
        probs = np.exp(gv + logk - u)
        probs /= probs.sum()
        log_norm[a] = u
        kernel[a] = tuple((c, float(p)) for (c, _), p in zip(row, probs))
        weights.append(tuple(float(u - x) for x in gv))
    if isinstance(root_law, str):
        if root_law == "base":
            beta = model.root_law
        elif root_law == "pi":
            beta = analyze(model).eigenvector
        else:
            raise ValueError(f"unknown root law {root_law!r}")
    else:
        beta = tuple(float(x) for x in root_law)
    with np.errstate(divide="ignore"):
        ratio = tuple(
            float(np.log(b0) - np.log(b1)) if b1 > 0 else 0.0
            for b0, b1 in zip(model.root_law, beta)
        )
    tilted = GWModel(model.alphabet, tuple(beta), kernel)
    return TiltedModel(model, g, log_norm, tilted, tuple(weights), ratio)


@dataclass(frozen=True)
class WeightedTree:
    tree: TypedTree
    log_weight: float  # log dP/dP~ of this tree


def _log_weight(tilted: TiltedModel, types, cfgs) -> float:
    offspring = math.fsum(tilted.weights[t][j] for t, j in zip(types.tolist(), cfgs.tolist()))
    return tilted.log_root_ratio[types[0]] + offspring


def sample_tilted(tilted: TiltedModel, rng: RandomSource, cap: int = DEFAULT_CAP, kernels=None):
    raw = grow_raw(tilted.model, rng, cap, kernels)
    if raw is None:
        return Overflow(cap)
    return WeightedTree(_tables(tilted.model).tree(*raw), _log_weight(tilted, *raw))


def sample_tilted_conditioned(
    tilted: TiltedModel, n: int, rng: RandomSource, max_attempts=None, kernels=None, q=None
):
    """Draw from the tilted law given ``|V| = n``, with its base-model log weight."""
    q = _acceptance(tilted.model, n) if q is None else q
    raw = _grow_sized(tilted.model, n, rng, max_attempts, q, kernels)
    return WeightedTree(_tables(tilted.model).tree(*raw), _log_weight(tilted, *raw))


class Estimate(NamedTuple):
    estimate: float
    std_error: float
    overflows: int = 0


def _mean_se(values) -> tuple:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), math.inf
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def importance_estimate(
    tilted: TiltedModel,
    event: Callable[[TypedTree], bool],
    draws: int,
    rng: RandomSource,
    cap: int = DEFAULT_CAP,
    kernels=None,
) -> Estimate:
    """Unbiased estimate of the base-model probability of ``event`` (trees within cap)."""
    if draws < 1:
        raise ValueError("draws must be >= 1")
    vals, overflows = [], 0
    for _ in range(draws):
        w = sample_tilted(tilted, rng, cap, kernels)
        if isinstance(w, Overflow):
            overflows += 1
            vals.append(0.0)
        else:
            vals.append(math.exp(w.log_weight) if event(w.tree) else 0.0)
    return Estimate(*_mean_se(vals), overflows)


def conditioned_importance_estimate(
    tilted: TiltedModel,
    n: int,
    event: Callable,
    draws: int,
    rng: RandomSource,
    kernels=None,
    on: str = "tree",
) -> Estimate:
    """Estimate ``P_n{event}`` from draws of the tilted law given ``|V| = n``.

    ``P_n(y) = P~_n(y) * w(y) * P~{|V|=n} / P{|V|=n}``; both size
    probabilities are exact (size DP). With ``on="measure"`` the event is
    evaluated on the empirical offspring measure and no tree is built.
    """
    q = _acceptance(tilted.base, n)
    q_t = _acceptance(tilted.model, n)
    scale = q_t / q
    tables = _tables(tilted.model)
    vals = []
    for _ in range(draws):
        raw = _grow_sized(tilted.model, n, rng, None, q_t, kernels)
        arg = tables.measure(*raw) if on == "measure" else tables.tree(*raw)
        vals.append(math.exp(_log_weight(tilted, *raw)) * scale if event(arg) else 0.0)
    return Estimate(*_mean_se(vals))
