"""Kullback action, its Legendre-dual evaluation and offspring entropies."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .model import (
    GWModel,
    OffspringMeasure,
    atom_key,
    plain_marginal,
    shift_invariance_defect,
)
from .spectral import ConvergenceFailure, TestFunction


EPS = float(np.finfo(float).eps)


class Reason(str, enum.Enum):
    ABS_CONTINUOUS = "AbsContinuous"
    NOT_ABSOLUTELY_CONTINUOUS = "NotAbsolutelyContinuous"
    NOT_SHIFT_INVARIANT = "NotShiftInvariant"
    MARGINAL_MISMATCH = "MarginalMismatch"


class Diverging(ArithmeticError):
    """The dual objective grew past its ceiling along ``witness`` atoms."""

    code = "diverging"

    def __init__(self, msg, value=math.inf, witness=()):
        super().__init__(msg)
        self.value = value
        self.witness = tuple(witness)


@dataclass(frozen=True)
class KullbackResult:
    value: float
    reason: Reason
    defect: float
    marginal_gap: float

    @property
    def finite(self) -> bool:
        return self.reason is Reason.ABS_CONTINUOUS

    def to_json(self) -> dict:
        return {
            "value": self.value if self.finite else "inf",
            "reason": self.reason.value,
            "defect": self.defect,
            "marginal_gap": self.marginal_gap,
        }


@dataclass(frozen=True)
class DualSolution:
    value: float
    argmax: TestFunction
    iterations: int
    gradient_norm: float

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "argmax": {atom_key(a, c): v for (a, c), v in self.argmax.items()},
        }


@dataclass(frozen=True)
class DualSettings:
    tol: float = 1e-10
    max_iter: int = 10**5
    ceiling: float = 1e3
    armijo: float = 1e-4


def product_measure(pi, model: GWModel) -> OffspringMeasure:
    """``pi (x) K``: mass ``pi(a) K{c|a}`` at every supported ``(a, c)``."""
    return OffspringMeasure(
        {(a, c): pi[i] * p for i, a in enumerate(model.alphabet) for c, p in model.kernel[a]}
    )


def relative_entropy(rho: Mapping, mu: Mapping) -> float:
    terms = []
    for key, r in rho.items():
        if r <= 0:
            continue
        m = mu.get(key, 0.0)
        if m <= 0:
            return math.inf
        terms.append(r * math.log(r / m))
    return math.fsum(terms)


def kullback_action(pi, model: GWModel, rho: OffspringMeasure, gate_tol: float = 1e-9) -> KullbackResult:
    """Relative entropy to ``pi (x) K``, gated on shift invariance and ``rho_1 = pi``."""
    defect = shift_invariance_defect(rho, model.alphabet)
    gap = math.fsum(abs(plain_marginal(rho, model.alphabet) - np.asarray(pi)))
    if defect > gate_tol:
        return KullbackResult(math.inf, Reason.NOT_SHIFT_INVARIANT, defect, gap)
    if gap > gate_tol:
        return KullbackResult(math.inf, Reason.MARGINAL_MISMATCH, defect, gap)
    h = relative_entropy(rho, product_measure(pi, model))
    if math.isinf(h):
        return KullbackResult(math.inf, Reason.NOT_ABSOLUTELY_CONTINUOUS, defect, gap)
    return KullbackResult(max(h, 0.0), Reason.ABS_CONTINUOUS, defect, gap)


# -- dual side ---------------------------------------------------------------


def _coordinates(pi, model, rho):
    mu = product_measure(pi, model)
    atoms = list(mu) + [k for k in rho if k not in mu]
    r = np.array([rho.get(k, 0.0) for k in atoms])
    m = np.array([mu.get(k, 0.0) for k in atoms])
    with np.errstate(divide="ignore"):
        logm = np.log(m)
    return atoms, r, logm


def _objective(g, r, logm):
    lse = logsumexp(g + logm)
    return float(r @ g - lse), lse


def dual_objective(g: Mapping, pi, model: GWModel, rho: Mapping) -> float:
    """``<g, rho> - U_K(g, pi)``."""
    atoms, r, logm = _coordinates(pi, model, rho)
    gv = np.array([g.get(k, 0.0) for k in atoms])
    return _objective(gv, r, logm)[0]


def dual_gradient(g: Mapping, pi, model: GWModel, rho: Mapping) -> dict:
    """``rho(a,c) - exp(g(a,c)) pi(a) K{c|a} / exp(U)`` per coordinate."""
    atoms, r, logm = _coordinates(pi, model, rho)
    gv = np.array([g.get(k, 0.0) for k in atoms])
    _, lse = _objective(gv, r, logm)
    grad = r - np.exp(gv + logm - lse)
    return dict(zip(atoms, grad.tolist()))


def dual_value(pi, model: GWModel, rho: Mapping, opt: DualSettings | None = None) -> DualSolution:
    """Maximize ``<g, rho> - U_K(g, pi)`` over test functions.

    Gradient ascent preconditioned by the current tilted weights, with
    Armijo backtracking. Atoms of ``rho`` outside ``supp(pi (x) K)`` make the
    objective unbounded; the ascent then crosses ``opt.ceiling`` and raises
    :class:`Diverging`.
    """
    opt = opt or DualSettings()
    atoms, r, logm = _coordinates(pi, model, rho)
    off = [atoms[i] for i in np.flatnonzero(np.isneginf(logm) & (r > 0))]
    g = np.zeros(len(atoms))
    f, lse = _objective(g, r, logm)
    gnorm = math.inf
    it = 0
    for it in range(1, opt.max_iter + 1):
        p = np.exp(g + logm - lse)
        grad = r - p
        gnorm = float(np.abs(grad).sum())
        if gnorm <= opt.tol:
            break
        d = grad / np.maximum(p, 1e-12)
        slope = float(grad @ d)
        t = 1.0
        while True:
            g_new = g + t * d
            f_new, lse_new = _objective(g_new, r, logm)
            # near the optimum the predicted gain is below rounding of f
            if f_new >= f + opt.armijo * t * slope - 8 * EPS * max(1.0, abs(f)):
                break
            t *= 0.5
            if t < 1e-30:
                raise ConvergenceFailure(
                    f"line search stalled at gradient norm {gnorm:.3e}"
                )
        g, f, lse = g_new, f_new, lse_new
        if f > opt.ceiling:
            raise Diverging(
                f"dual objective exceeded ceiling {opt.ceiling:g}", value=f, witness=off
            )
    else:
        p = np.exp(g + logm - lse)
        gnorm = float(np.abs(r - p).sum())
        if gnorm > opt.tol:
            raise ConvergenceFailure(
                f"dual ascent hit max_iter={opt.max_iter} at gradient norm {gnorm:.3e}"
            )
    # objective is invariant under g -> g + t; pin the rho-mean of g to zero
    g = g - float(r @ g)
    argmax = TestFunction(
        {k: float(v) for k, v, lm in zip(atoms, g, logm) if not np.isneginf(lm)}
    )
    return DualSolution(f, argmax, it, gnorm)


# -- entropies ---------------------------------------------------------------


def kernel_conditional(model: GWModel) -> dict:
    return {a: {c: p for c, p in model.kernel[a]} for a in model.alphabet}


def offspring_entropy(varpi: Mapping, alphabet=None) -> np.ndarray:
    """Per-type entropy (nats) of the conditional offspring laws ``varpi(.|a)``."""
    alphabet = list(alphabet) if alphabet is not None else list(varpi)
    out = []
    for a in alphabet:
        row = varpi.get(a, {})
        out.append(-math.fsum(p * math.log(p) for p in row.values() if p > 0))
    return np.array(out)


def mcmillan_exponent(H, pi) -> float:
    return math.fsum(np.asarray(H) * np.asarray(pi))
