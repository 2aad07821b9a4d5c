"""Plot-ready data for the threshold sweeps (no rendering)."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .conic import SolverSettings
from .errors import CondboundError
from .model import (BoundResult, HalfLine, MomentSpec, PiecewisePolynomial, Status,
                    Symmetric, SymmetricUnimodal, Unstructured)
from .sos import DualBoundProblem, dual_bound, normal_moments, uniform_moments

PP = PiecewisePolynomial

UNIFORM_SUPPORT = (0.0, 5.0)
TAIL_EVENTS = (0.25, 0.5, 1.25)
NORMAL_THRESHOLDS = tuple(np.round(np.arange(-2.0, 0.75 + 1e-9, 0.25), 10))
STRUCTURES = {"none": Unstructured(), "symmetric": Symmetric(0.0),
              "symmetric_unimodal": SymmetricUnimodal(0.0)}


@dataclass(frozen=True)
class CurvePoint:
    t: float
    x: float          # tail level c for conditional probabilities, t otherwise
    m: int
    structure: str
    result: BoundResult
    truth: float
    wall_ms: float

    def csv(self, timings: bool = False) -> dict:
        r = self.result
        return {"t": self.t, "c": self.x, "m": self.m, "structure": self.structure,
                "value": r.value, "status": r.status.value,
                "gap": r.gap if r.gap is not None else "", "truth": self.truth,
                "wall_ms": self.wall_ms if timings else ""}


def _timed(prob: DualBoundProblem, settings: SolverSettings) -> tuple[BoundResult, float]:
    t0 = time.perf_counter()
    try:
        res = dual_bound(prob, settings)
    except CondboundError as exc:
        res = BoundResult(float("nan"), Status.NUMERICAL_TROUBLE, diagnostics=(str(exc),))
    return res, 1e3 * (time.perf_counter() - t0)


def tail_levels(t: float, step: float = 0.25) -> np.ndarray:
    lo, hi = UNIFORM_SUPPORT
    return np.round(np.arange(t, hi + 1e-9, step), 10)


def uniform_tail_curves(m_values=(2, 4, 6), events=TAIL_EVENTS, step: float = 0.25,
                        settings: SolverSettings = SolverSettings()) -> list[CurvePoint]:
    """``P(X >= c | X >= t)`` bounds for Uniform[0, 5] moments."""
    lo, hi = UNIFORM_SUPPORT
    out = []
    for t in events:
        for m in m_values:
            mom = MomentSpec.power(uniform_moments(lo, hi, m))
            for c in tail_levels(t, step):
                prob = DualBoundProblem(mom, HalfLine(float(t)), PP.step(float(c)),
                                        support=UNIFORM_SUPPORT)
                res, ms = _timed(prob, settings)
                truth = (hi - c) / (hi - t)
                out.append(CurvePoint(float(t), float(c), m, "none", res, truth, ms))
    return out


def normal_conditional_mean(t: float) -> float:
    """``E[X | X >= t]`` for a standard normal."""
    return float(norm.pdf(t) / norm.sf(t))


def normal_mean_curves(m_values=(2, 4, 6), structures=tuple(STRUCTURES),
                       thresholds=NORMAL_THRESHOLDS,
                       settings: SolverSettings = SolverSettings()) -> list[CurvePoint]:
    """``E[X | X >= t]`` bounds for standard-normal moments and structures."""
    out = []
    for m in m_values:
        mom = MomentSpec.power(normal_moments(0.0, 1.0, m))
        for name in structures:
            for t in thresholds:
                prob = DualBoundProblem(mom, HalfLine(float(t)), PP.identity(), STRUCTURES[name])
                res, ms = _timed(prob, settings)
                out.append(CurvePoint(float(t), float(t), m, name, res,
                                      normal_conditional_mean(t), ms))
    return out
