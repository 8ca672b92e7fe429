"""Finite-n verification of the local LDP, the McMillan count and the full LDP.

Exact probabilities come from the aggregated census (small n); larger n use
importance sampling under the dual-optimal tilt, conditioned on size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .enumerator import ImpossibleSize, count_table, exact_event_probability
from .kullback import (
    Diverging,
    DualSettings,
    dual_gradient,
    dual_objective,
    dual_value,
    kernel_conditional,
    kullback_action,
    mcmillan_exponent,
    offspring_entropy,
    product_measure,
    relative_entropy,
)
from .model import GWModel, OffspringMeasure
from .sampler import RandomSource, conditioned_importance_estimate, tilt
from .spectral import Classification, ConvergenceFailure, TestFunction, analyze

BALL_TOL = 1e-12


class NotCritical(ValueError):
    code = "not_critical"


# -- neighbourhoods ------------------------------------------------------------


@dataclass(frozen=True)
class L1Ball:
    """Closed L1 ball; boundary points count as inside (up to 1e-12)."""

    center: OffspringMeasure
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be > 0")

    @property
    def reference(self) -> OffspringMeasure:
        return self.center

    def __contains__(self, rho) -> bool:
        return rho.l1_distance(self.center) <= self.radius + BALL_TOL

    def to_json(self) -> dict:
        return {"kind": "l1", "radius": self.radius}


@dataclass(frozen=True)
class WeakNeighborhood:
    """``{w : |<g_i, w> - center_i| < half_width_i for all i}``."""

    constraints: tuple  # (TestFunction, center, half_width)
    reference: OffspringMeasure | None = None

    def __post_init__(self):
        for _, _, h in self.constraints:
            if not h > 0:
                raise ValueError("half_width must be > 0")

    @classmethod
    def around(cls, rho: OffspringMeasure, tests: Sequence[Mapping], half_width: float):
        return cls(
            tuple((TestFunction(g), rho.pair(g), half_width) for g in tests), reference=rho
        )

    def __contains__(self, rho) -> bool:
        return all(abs(rho.pair(g) - c) < h for g, c, h in self.constraints)

    def to_json(self) -> dict:
        return {"kind": "weak", "constraints": len(self.constraints)}


@dataclass(frozen=True)
class HalfSpace:
    """``{w : <g, w> > <g, rho> - slack}``, one-sided neighbourhood of ``rho``."""

    g: TestFunction
    reference: OffspringMeasure
    slack: float

    def __contains__(self, rho) -> bool:
        return rho.pair(self.g) > self.reference.pair(self.g) - self.slack

    def to_json(self) -> dict:
        return {"kind": "halfspace", "slack": self.slack}


class Everything:
    reference = None

    def __contains__(self, rho) -> bool:
        return True

    def to_json(self) -> dict:
        return {"kind": "everything"}


@dataclass(frozen=True)
class Union:
    cells: tuple

    def __contains__(self, rho) -> bool:
        return any(rho in c for c in self.cells)


# -- helpers -------------------------------------------------------------------


def _require_critical(model: GWModel):
    rep = analyze(model)
    if rep.classification is not Classification.CRITICAL or not rep.irreducible:
        raise NotCritical(
            f"model must be critical and irreducible (eigenvalue {rep.eigenvalue:.12g},"
            f" irreducible={rep.irreducible})"
        )
    return np.array(rep.eigenvector)


def _tilt_for(model, pi, rho, settings=None):
    """Dual-optimal tilt towards ``rho``; identity tilt when the dual diverges."""
    try:
        sol = dual_value(pi, model, rho, settings)
        g = sol.argmax
    except (Diverging, ConvergenceFailure):
        g = TestFunction()
    return tilt(model, g)


def _probability(model, n, B, tilted, exact_max_n, draws, seed):
    """``(method, probability, std_error)``; probability None when |V| = n is impossible."""
    if n <= exact_max_n:
        try:
            return "enumeration", exact_event_probability(model, n, B), 0.0
        except ImpossibleSize:
            return "enumeration", None, 0.0
    try:
        est = conditioned_importance_estimate(
            tilted,
            n,
            lambda rho: rho in B,
            draws,
            RandomSource(seed, stream=n),
            on="measure",
        )
    except ImpossibleSize:
        return "importance_sampling", None, 0.0
    return "importance_sampling", min(1.0, max(0.0, est.estimate)), est.std_error


def _log_rate(p, n):
    if p is None or p <= 0:
        return None
    return math.log(p) / n


def fit_correction(ns, gaps):
    """Least-squares ``gap_n ~ (a + b log n) / n``; returns ``(a, b, residuals)``."""
    ns = np.asarray(ns, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if ns.size == 0:
        return 0.0, 0.0, np.zeros(0)
    X = np.column_stack([1.0 / ns, np.log(ns) / ns])
    coef, *_ = np.linalg.lstsq(X, gaps, rcond=None)
    return float(coef[0]), float(coef[1]), gaps - X @ coef


def _jsonable(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


# -- local LDP -------------------------------------------------------------------


@dataclass
class RateReport:
    rows: list
    reference: dict
    fit: dict
    notes: list = field(default_factory=list)

    columns = ("n", "method", "probability", "std_error", "log_rate", "J", "gap", "fitted", "residual")

    def to_json(self) -> dict:
        return {
            "reference": self.reference,
            "fit": self.fit,
            "notes": self.notes,
            "rows": [{k: _jsonable(r.get(k)) for k in self.columns} for r in self.rows],
        }

    def csv_rows(self):
        yield list(self.columns)
        for r in self.rows:
            yield ["" if r.get(k) is None else _jsonable(r.get(k)) for k in self.columns]


def verify_lldp(
    model: GWModel,
    rho: OffspringMeasure,
    B,
    sizes: Sequence[int],
    seed: int = 0,
    draws: int = 2000,
    exact_max_n: int = 19,
    residual_tol: float = 0.02,
    dual: DualSettings | None = None,
) -> RateReport:
    """Compare ``(1/n) log P_n{M_y in B}`` with ``-J(pi, rho)`` over ``sizes``."""
    pi = _require_critical(model)
    sizes = sorted(set(int(n) for n in sizes))
    gate_tol = max(1e-9, 3.0 / min(sizes))
    J = kullback_action(pi, model, rho, gate_tol)
    tilted = _tilt_for(model, pi, rho, dual)
    notes = []
    if not J.finite:
        notes.append(f"J = inf ({J.reason.value}); upper bound holds trivially")
    rows = []
    for n in sizes:
        method, p, se = _probability(model, n, B, tilted, exact_max_n, draws, seed)
        lr = _log_rate(p, n)
        gap = lr + J.value if (lr is not None and J.finite) else None
        rows.append(dict(n=n, method=method, probability=p, std_error=se, log_rate=lr,
                         J=J.value, gap=gap))
        if p == 0:
            notes.append(f"n={n}: P_n{{B}} = 0, log rate is -inf")
    fitted = [r for r in rows if r["gap"] is not None]
    a, b, res = fit_correction([r["n"] for r in fitted], [r["gap"] for r in fitted])
    for r, e in zip(fitted, res):
        r["fitted"] = (a + b * math.log(r["n"])) / r["n"]
        r["residual"] = float(e)
    max_res = float(np.max(np.abs(res))) if res.size else 0.0
    fit = {
        "a": a,
        "b": b,
        "max_abs_residual": max_res,
        "residual_tol": residual_tol,
        "within_tolerance": max_res <= residual_tol,
        "points": len(fitted),
    }
    reference = {"kullback": J.to_json(), "gate_tol": gate_tol, "pi": pi.tolist()}
    return RateReport(rows, reference, fit, notes)


# -- McMillan ----------------------------------------------------------------


@dataclass
class McMillanReport:
    rows: list
    target: float
    relative_deviation: float | None
    monotone: bool

    columns = ("n", "count", "log_count", "slope", "deviation")

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "relative_deviation": self.relative_deviation,
            "monotone": self.monotone,
            "rows": [{k: r.get(k) for k in self.columns} for r in self.rows],
        }

    def csv_rows(self):
        yield list(self.columns)
        for r in self.rows:
            yield ["" if r.get(k) is None else r.get(k) for k in self.columns]


def verify_mcmillan(
    model: GWModel,
    sizes: Sequence[int] | None = None,
    n_max: int | None = None,
    varpi: Mapping | None = None,
    require_critical: bool = True,
) -> McMillanReport:
    """Log-count slopes against ``<H_varpi, pi>``; ``varpi`` defaults to the kernel."""
    if require_critical:
        pi = _require_critical(model)
    else:
        pi = np.array(analyze(model).eigenvector)
    if sizes is None:
        sizes = range(1, (n_max or 25) + 1)
    sizes = sorted(set(int(n) for n in sizes))
    counts = count_table(model, sizes[-1])
    varpi = kernel_conditional(model) if varpi is None else varpi
    target = mcmillan_exponent(offspring_entropy(varpi, model.alphabet), pi)
    rows, prev = [], None
    for n in sizes:
        c = counts[n]
        row = dict(n=n, count=c, log_count=math.log(c) if c > 0 else None, slope=None, deviation=None)
        if c > 0:
            if prev is not None:
                row["slope"] = (row["log_count"] - prev[1]) / (n - prev[0])
                err = abs(row["slope"] - target)
                row["deviation"] = err / abs(target) if target else err
            prev = (n, row["log_count"])
        rows.append(row)
    devs = [r["deviation"] for r in rows if r["deviation"] is not None]
    monotone = all(x >= y for x, y in zip(devs, devs[1:]))
    return McMillanReport(rows, target, devs[-1] if devs else None, monotone)


# -- duality -------------------------------------------------------------------


def random_measures(pi, model: GWModel, trials: int, rng: np.random.Generator) -> list:
    """``trials`` random probability measures on ``supp(pi (x) K)``; the first is ``pi (x) K``."""
    mu = product_measure(pi, model)
    atoms = list(mu)
    out = [mu]
    for _ in range(trials - 1):
        w = rng.exponential(size=len(atoms))
        w /= w.sum()
        out.append(OffspringMeasure(dict(zip(atoms, w))))
    return out


def gradient_check(pi, model, rho, points: int, rng, step: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients."""
    atoms = list(product_measure(pi, model))
    worst = 0.0
    for _ in range(points):
        g = dict(zip(atoms, rng.normal(scale=2.0, size=len(atoms))))
        an = dual_gradient(g, pi, model, rho)
        a_vec = np.array([an[k] for k in atoms])
        fd = []
        for k in atoms:
            gp, gm = dict(g), dict(g)
            gp[k] += step
            gm[k] -= step
            fd.append((dual_objective(gp, pi, model, rho) - dual_objective(gm, pi, model, rho)) / (2 * step))
        err = np.linalg.norm(a_vec - np.array(fd)) / max(np.linalg.norm(a_vec), 1e-12)
        worst = max(worst, float(err))
    return worst


def verify_duality(
    model: GWModel,
    trials: int = 100,
    seed: int = 0,
    gradient_points: int = 20,
    off_support: bool = True,
    dual: DualSettings | None = None,
) -> dict:
    """Dual value against closed-form relative entropy on random measures."""
    pi = np.array(analyze(model).eigenvector)
    rng = RandomSource(seed).generator
    mu = product_measure(pi, model)
    gaps = []
    for rho in random_measures(pi, model, trials, rng):
        h = relative_entropy(rho, mu)
        sol = dual_value(pi, model, rho, dual)
        gaps.append(abs(sol.value - h))
    summary = {
        "trials": trials,
        "max_gap": max(gaps),
        "mean_gap": float(np.mean(gaps)),
    }
    if off_support:
        # config longer than any supported one lies outside supp(pi (x) K)
        a = model.alphabet[0]
        stray = (a, (a,) * (model.max_branch + 1))
        rho = OffspringMeasure({**{k: 0.9 * v for k, v in mu.items()}, stray: 0.1})
        closed = relative_entropy(rho, mu)
        try:
            dual_value(pi, model, rho, dual)
            diverged = False
        except Diverging:
            diverged = True
        summary["off_support_agree"] = math.isinf(closed) and diverged
    if gradient_points:
        rho = random_measures(pi, model, 2, rng)[1]
        summary["gradient_max_rel_error"] = gradient_check(pi, model, rho, gradient_points, rng)
    return summary


# -- full LDP over a finite cover ---------------------------------------------


@dataclass
class LDPReport:
    rows: list
    inf_J: float
    cells: list
    slack: float

    columns = ("n", "method", "probability", "std_error", "log_rate", "margin", "upper_ok", "lower_ok")

    def to_json(self) -> dict:
        return {
            "inf_J": _jsonable(self.inf_J),
            "slack": self.slack,
            "cells": self.cells,
            "rows": [{k: _jsonable(r.get(k)) for k in self.columns} for r in self.rows],
        }

    def csv_rows(self):
        yield list(self.columns)
        for r in self.rows:
            yield ["" if r.get(k) is None else _jsonable(r.get(k)) for k in self.columns]


def verify_ldp_bounds(
    model: GWModel,
    cells: Sequence,
    sizes: Sequence[int],
    seed: int = 0,
    draws: int = 2000,
    exact_max_n: int = 19,
    slack: float = 0.15,
    dual: DualSettings | None = None,
) -> LDPReport:
    """``(1/n) log P_n{union of cells}`` against ``-inf_cells J(pi, center)``.

    ``margin = -inf J - (1/n) log P_n``: the upper bound needs ``margin >= 0``,
    the lower bound with slack ``s`` needs ``margin <= s``.
    """
    pi = _require_critical(model)
    sizes = sorted(set(int(n) for n in sizes))
    gate_tol = max(1e-9, 3.0 / min(sizes))
    cell_info, best, best_ref = [], math.inf, None
    for cell in cells:
        ref = getattr(cell, "reference", None)
        if ref is None:
            J = None
        else:
            J = kullback_action(pi, model, ref, gate_tol)
            if J.finite and J.value < best:
                best, best_ref = J.value, ref
        cell_info.append({**cell.to_json(), "J": None if J is None else J.to_json()})
    if any(isinstance(c, Everything) for c in cells):
        best = min(best, 0.0)
        best_ref = best_ref or product_measure(pi, model)
    tilted = _tilt_for(model, pi, best_ref, dual) if best_ref is not None else tilt(model, {})
    union = Union(tuple(cells))
    rows = []
    for n in sizes:
        method, p, se = _probability(model, n, union, tilted, exact_max_n, draws, seed)
        lr = _log_rate(p, n)
        row = dict(n=n, method=method, probability=p, std_error=se, log_rate=lr)
        if lr is None:
            row["margin"] = math.inf if p == 0 else None
        else:
            row["margin"] = 0.0 - best - lr  # avoid -0.0 in reports
        m = row["margin"]
        row["upper_ok"] = None if m is None else m >= -1e-12
        row["lower_ok"] = None if m is None else m <= slack
        rows.append(row)
    return LDPReport(rows, best, cell_info, slack)
