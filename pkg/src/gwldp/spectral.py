"""Mean matrix, Perron-Frobenius eigenpair and the spectral potential."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .model import GWModel, multiplicity


class ConvergenceFailure(RuntimeError):
    code = "convergence_failure"


class Classification(str, enum.Enum):
    SUBCRITICAL = "Subcritical"
    CRITICAL = "Critical"
    SUPERCRITICAL = "Supercritical"


class NonCriticalWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpectralReport:
    eigenvalue: float
    eigenvector: tuple
    irreducible: bool
    classification: Classification
    residual: float

    def to_json(self) -> dict:
        return {
            "eigenvalue": self.eigenvalue,
            "eigenvector": list(self.eigenvector),
            "irreducible": self.irreducible,
            "classification": self.classification.value,
            "residual": self.residual,
        }


class TestFunction(dict):
    """Finite real values on ``(type, config)`` atoms; zero where unset."""

    __test__ = False

    def __init__(self, values=(), **kw):
        super().__init__(values, **kw)
        for k, v in self.items():
            if not math.isfinite(v):
                raise ValueError(f"test function value at {k!r} is not finite")

    @classmethod
    def constant(cls, t: float, atoms) -> "TestFunction":
        return cls({atom: float(t) for atom in atoms})

    def shifted(self, t: float) -> "TestFunction":
        return TestFunction({k: v + t for k, v in self.items()})


def mean_matrix(model: GWModel) -> np.ndarray:
    """``A[a, b]``: expected number of type-``a`` children of a type-``b`` vertex."""
    k = model.k
    A = np.zeros((k, k))
    for j, b in enumerate(model.alphabet):
        for i, a in enumerate(model.alphabet):
            A[i, j] = math.fsum(p * multiplicity(a, c) for c, p in model.kernel[b])
    return A


def irreducibility(A) -> bool:
    """Positivity-pattern reachability: every type reaches every type in >= 1 step."""
    reach = np.asarray(A) > 0
    k = reach.shape[0]
    # Warshall closure over paths of length >= 1
    for m in range(k):
        reach = reach | (reach[:, [m]] & reach[[m], :])
    return bool(reach.all())


def perron_eigenpair(A, tol: float = 1e-12, max_iter: int = 10**6):
    """Dominant eigenvalue and L1-normalized nonnegative eigenvector of ``A``.

    Power iteration runs on ``A + I`` so periodic patterns still converge.
    """
    A = np.asarray(A, dtype=float)
    k = A.shape[0]
    B = A + np.eye(k)
    x = np.full(k, 1.0 / k)
    lam = 0.0
    residual = math.inf
    for _ in range(max_iter):
        y = B @ x
        s = y.sum()
        if s <= 0:
            break
        x = y / s
        Bx = B @ x
        lam = float(x @ Bx / (x @ x)) - 1.0
        residual = float(np.abs(A @ x - lam * x).sum())
        if residual <= tol:
            return lam, x
    raise ConvergenceFailure(
        f"power iteration stopped with residual {residual:.3e} > {tol:.1e}"
    )


def classify(lam: float, band: float = 1e-9) -> Classification:
    if lam > 1.0 + band:
        return Classification.SUPERCRITICAL
    if lam < 1.0 - band:
        return Classification.SUBCRITICAL
    return Classification.CRITICAL


def analyze(model: GWModel, band: float = 1e-9, tol: float = 1e-12) -> SpectralReport:
    A = mean_matrix(model)
    irr = irreducibility(A)
    lam, pi = perron_eigenpair(A, tol=tol)
    cls = classify(lam, band)
    if cls is not Classification.CRITICAL:
        warnings.warn(f"model is {cls.value} (eigenvalue {lam:.12g})", NonCriticalWarning)
    residual = float(np.abs(A @ pi - lam * pi).sum())
    return SpectralReport(lam, tuple(float(v) for v in pi), irr, cls, residual)


def spectral_potential(g: Mapping, pi, model: GWModel) -> float:
    """``log sum_{a,c} exp(g(a,c)) pi(a) K{c|a}``; ``g`` is zero where unset."""
    logs, weights = [], []
    for i, a in enumerate(model.alphabet):
        if pi[i] <= 0:
            continue
        for c, p in model.kernel[a]:
            logs.append(g.get((a, c), 0.0))
            weights.append(pi[i] * p)
    return float(logsumexp(logs, b=weights))
