"""Contextual distributionally robust decisions with halfspace side information.

Both ambiguity sets lead to a single convex program that is minimised jointly
over the decision and the dual multipliers:

* Chebyshev (mean, covariance upper bound): one LMI for the complement of the
  event and one per cost term, each from the S-lemma.
* componentwise/pairwise MAD: the same two families of robust constraints,
  dualised as LPs.

The Chebyshev program is built in centred coordinates ``x - mean`` so that
``x' Lam x`` and the trace term ``<Lam, Sigma>`` refer to the same quadratic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.stats import norm

from .conic import OUTCOME_TO_STATUS, Nonneg, ProgramBuilder, SolverSettings, solve
from .errors import InvalidInput, QuadratureFailure, SolverFailure
from .model import (AffineTerm, AmbiguitySpec, BoundResult, ComponentwiseMAD, CovarianceUB,
                    FullSpace, Halfspace, MomentSpec, MultiMonomial, PiecewiseAffineMax,
                    Status)


@dataclass(frozen=True)
class ContextualInstance:
    """Decision problem ``min_nu sup E[cost(nu, X) | X in event]``.

    ``event`` is a halfspace over the full vector ``(outcomes, covariates)``
    whose normal vanishes on the outcome block, or :class:`FullSpace`.
    """

    spec: AmbiguitySpec
    event: Halfspace | FullSpace
    cost: PiecewiseAffineMax
    decision_bounds: tuple[tuple[float, float], ...] = ()
    n_y: int = 1
    n_z: int = 1

    def __post_init__(self):
        n = self.n_y + self.n_z
        if self.spec.dimension != n:
            raise InvalidInput("spec dimension must equal n_y + n_z")
        if self.cost.uncertainty_dim != n:
            raise InvalidInput("cost must act on the full random vector")
        if len(self.decision_bounds) != self.cost.decision_dim:
            raise InvalidInput("one bound pair per decision coordinate")
        ev = self.event
        if isinstance(ev, Halfspace):
            if ev.dimension == self.n_z:
                ev = Halfspace((0.0,) * self.n_y + ev.normal, ev.offset, ev.direction)
                object.__setattr__(self, "event", ev)
            if ev.dimension != n:
                raise InvalidInput("halfspace dimension mismatch")
            if any(ev.normal[:self.n_y]):
                raise InvalidInput("event may only restrict covariates")
        elif not isinstance(ev, FullSpace):
            raise InvalidInput("event must be a halfspace or the full space")

    @property
    def dimension(self) -> int:
        return self.n_y + self.n_z


def _decisions(b: ProgramBuilder, inst: ContextualInstance, decision):
    k = inst.cost.decision_dim
    nu = b.variables(k)
    for i, v in enumerate(nu):
        lo, hi = inst.decision_bounds[i]
        if decision is not None:
            b.equality({int(v): 1.0}, float(decision[i]))
            continue
        if math.isfinite(lo):
            b.nonneg({int(v): 1.0}, -lo)
        if math.isfinite(hi):
            b.nonneg({int(v): -1.0}, hi)
    return nu


def _term_affine(term: AffineTerm, nu, n: int, shift=None):
    """Slope entries and intercept as ``(Terms, const)`` pairs in the decision."""
    slopes = []
    for i in range(n):
        terms = {}
        if term.slope_nu:
            for k, v in enumerate(nu):
                if term.slope_nu[i][k]:
                    terms[int(v)] = term.slope_nu[i][k]
        slopes.append((terms, term.slope[i]))
    icpt = {}
    if term.intercept_nu:
        for k, v in enumerate(nu):
            if term.intercept_nu[k]:
                icpt[int(v)] = term.intercept_nu[k]
    const = term.intercept
    if shift is not None:
        # s' (x~ + mean) + t: fold s' mean into the intercept
        for i in range(n):
            terms, c = slopes[i]
            const += c * shift[i]
            for v, a in terms.items():
                icpt[v] = icpt.get(v, 0.0) + a * shift[i]
    return slopes, (icpt, const)


def _add(*pairs):
    terms, const = {}, 0.0
    for scale, (t, c) in pairs:
        for v, a in t.items():
            terms[v] = terms.get(v, 0.0) + scale * a
        const += scale * c
    return terms, const


def _result(out, value_var, nu, extra_notes=()):
    status = OUTCOME_TO_STATUS[out.status]
    if status is not Status.TIGHT:
        value = math.inf if status is Status.DIVERGENT else math.nan
        return None, BoundResult(value, status, diagnostics=(f"backend status {out.backend_status}",))
    notes = [f"backend status {out.backend_status}", *extra_notes]
    if out.reduced_accuracy:
        notes.append("reduced accuracy")
    decision = out.x[nu].copy()
    return decision, BoundResult(float(out.x[value_var]), Status.TIGHT, tuple(out.x),
                                 gap=abs(out.objective - out.dual_objective),
                                 diagnostics=tuple(notes))


# ---------------------------------------------------------------------------
# Chebyshev: S-lemma LMIs
# ---------------------------------------------------------------------------

def chebyshev_contextual(inst: ContextualInstance, decision: Sequence[float] | None = None,
                         settings: SolverSettings = SolverSettings()):
    """Worst-case conditional cost over mean/covariance-bounded distributions.

    Minimises jointly over the decision unless ``decision`` is given.
    Returns ``(decision, BoundResult)``.
    """
    disp = inst.spec.dispersion
    if not isinstance(disp, CovarianceUB):
        raise InvalidInput("Chebyshev program needs a CovarianceUB dispersion")
    n = inst.dimension
    mu = np.asarray(inst.spec.mean, dtype=float)
    S = disp.array
    b = ProgramBuilder()
    nu = _decisions(b, inst, decision)
    lam0 = int(b.variables(1)[0])
    lam1 = [int(v) for v in b.variables(n)]
    Lam = {}
    for j in range(n):
        for i in range(j + 1):
            Lam[i, j] = int(b.variables(1)[0])
    lam3 = int(b.variables(1)[0])
    # moment row in centred coordinates: lam0 + <Lam, Sigma> <= 0
    row = {lam0: -1.0}
    for (i, j), v in Lam.items():
        row[v] = -(S[i, j] if i == j else 2 * S[i, j])
    b.nonneg(row)

    def lmi(corner, linear):
        entries = {(0, 0): corner}
        for i in range(n):
            entries[0, i + 1] = linear[i]
        for (i, j), v in Lam.items():
            entries[i + 1, j + 1] = ({v: 1.0}, 0.0)
        b.psd_matrix(entries, n + 1)

    ev = inst.event
    if isinstance(ev, Halfspace):
        a, cbar = ev.as_le()
        cbar = cbar - float(a @ mu)
        # complement {a'x >= cbar}
        tau = int(b.variables(1)[0])
        b.nonneg({tau: 1.0})
        lmi(({lam0: 1.0, tau: cbar}, 0.0),
            [({lam1[i]: 0.5, tau: -0.5 * a[i]}, 0.0) for i in range(n)])
    for term in inst.cost.terms:
        slopes, icpt = _term_affine(term, nu, n, shift=mu)
        corner = _add((1.0, ({lam0: 1.0, lam3: 1.0}, 0.0)), (-1.0, icpt))
        linear = [_add((0.5, ({lam1[i]: 1.0}, 0.0)), (-0.5, slopes[i])) for i in range(n)]
        if isinstance(ev, Halfspace):
            chi = int(b.variables(1)[0])
            b.nonneg({chi: 1.0})
            corner = _add((1.0, corner), (1.0, ({chi: -cbar}, 0.0)))
            linear = [_add((1.0, linear[i]), (1.0, ({chi: 0.5 * a[i]}, 0.0))) for i in range(n)]
        lmi(corner, linear)
    b.minimize({lam3: 1.0})
    out = solve(b.build(), settings)
    return _result(out, lam3, nu)


# ---------------------------------------------------------------------------
# MAD: LP duals of the robust constraints
# ---------------------------------------------------------------------------

def mad_contextual(inst: ContextualInstance, decision: Sequence[float] | None = None,
                   settings: SolverSettings = SolverSettings()):
    """Worst-case conditional cost under componentwise/pairwise MAD bounds."""
    disp = inst.spec.dispersion
    if not isinstance(disp, ComponentwiseMAD):
        raise InvalidInput("MAD program needs a ComponentwiseMAD dispersion")
    n = inst.dimension
    m = np.asarray(inst.spec.mean, dtype=float)
    A = np.asarray(disp.directions, dtype=float)
    m0 = -A @ np.asarray(disp.center)
    f = np.asarray(disp.bounds)
    K = len(f)
    b = ProgramBuilder()
    nu = _decisions(b, inst, decision)
    lam0 = int(b.variables(1)[0])
    lam1 = [int(v) for v in b.variables(n)]
    lam2 = [int(v) for v in b.variables(K)]
    lam3 = int(b.variables(1)[0])
    for v in lam2:
        b.nonneg({v: 1.0})
    row = {lam0: -1.0}
    for i in range(n):
        row[lam1[i]] = -m[i]
    for k in range(K):
        row[lam2[k]] = row.get(lam2[k], 0.0) - f[k]
    b.nonneg(row)

    def robust(const_terms, lin_terms, c_side):
        """``const + lin' x + lam2' u >= 0`` for all ``u >= |d(x)|`` and
        ``c_side[0]' x >= c_side[1]`` (if given), through LP duality."""
        cp = [int(v) for v in b.variables(K)]
        cm = [int(v) for v in b.variables(K)]
        for v in cp + cm:
            b.nonneg({v: 1.0})
        for k in range(K):
            b.equality({cp[k]: 1.0, cm[k]: 1.0, lam2[k]: -1.0})
        tau = None
        if c_side is not None:
            tau = int(b.variables(1)[0])
            b.nonneg({tau: 1.0})
        for i in range(n):
            terms, c = lin_terms[i]
            eq = {v: -a for v, a in terms.items()}
            for k in range(K):
                eq[cp[k]] = eq.get(cp[k], 0.0) - A[k, i]
                eq[cm[k]] = eq.get(cm[k], 0.0) + A[k, i]
            if tau is not None:
                eq[tau] = c_side[0][i]
            b.equality(eq, c)
        terms, c = const_terms
        lhs = dict(terms)
        for k in range(K):
            lhs[cp[k]] = lhs.get(cp[k], 0.0) + m0[k]
            lhs[cm[k]] = lhs.get(cm[k], 0.0) - m0[k]
        if tau is not None:
            lhs[tau] = lhs.get(tau, 0.0) + c_side[1]
        b.nonneg(lhs, c)

    ev = inst.event
    lin = [({lam1[i]: 1.0}, 0.0) for i in range(n)]
    if isinstance(ev, Halfspace):
        a, cbar = ev.as_le()
        robust(({lam0: 1.0}, 0.0), lin, (a, cbar))
    for term in inst.cost.terms:
        slopes, icpt = _term_affine(term, nu, n)
        const = _add((1.0, ({lam0: 1.0, lam3: 1.0}, 0.0)), (-1.0, icpt))
        lin_l = [_add((1.0, lin[i]), (-1.0, slopes[i])) for i in range(n)]
        side = (-a, -cbar) if isinstance(ev, Halfspace) else None
        robust(const, lin_l, side)
    b.minimize({lam3: 1.0})
    out = solve(b.build(), settings)
    return _result(out, lam3, nu)


# ---------------------------------------------------------------------------
# newsvendor
# ---------------------------------------------------------------------------

def newsvendor_cost(h: float, p: float, q: float | None = None, uncertainty_dim: int = 1,
                    demand_index: int = 0) -> PiecewiseAffineMax:
    """``max{h (q - D), p (D - q)}``; ``q`` is the decision when omitted."""
    if not (h > 0 and p > 0):
        raise InvalidInput("holding and penalty costs must be positive")
    s_h = [0.0] * uncertainty_dim
    s_p = [0.0] * uncertainty_dim
    s_h[demand_index], s_p[demand_index] = -h, p
    if q is None:
        terms = (AffineTerm(s_h, 0.0, (), (h,)), AffineTerm(s_p, 0.0, (), (-p,)))
        return PiecewiseAffineMax(terms, 1, uncertainty_dim)
    terms = (AffineTerm(s_h, h * q), AffineTerm(s_p, -p * q))
    return PiecewiseAffineMax(terms, 0, uncertainty_dim)


def scarf_baseline(h: float, p: float, mu: float, sigma: float, q: float) -> float:
    """Worst-case expected newsvendor cost given only mean and standard deviation."""
    if not sigma > 0:
        raise InvalidInput("sigma must be positive")
    d = q - mu
    return h * d + (h + p) * 0.5 * (math.hypot(sigma, d) - d)


def scarf_order(h: float, p: float, mu: float, sigma: float) -> float:
    return mu + 0.5 * sigma * (math.sqrt(p / h) - math.sqrt(h / p))


def covariance(variances: Sequence[float], rho: float) -> np.ndarray:
    s = np.sqrt(np.asarray(variances, dtype=float))
    return np.array([[s[0] ** 2, rho * s[0] * s[1]], [rho * s[0] * s[1], s[1] ** 2]])


def covariate_event(threshold: float | None, direction: str = "ge") -> Halfspace | FullSpace:
    """``{Z >= threshold}`` on ``(D, Z)``; ``None`` gives the full space."""
    if threshold is None:
        return FullSpace(2)
    return Halfspace((0.0, 1.0), threshold, direction)


def newsvendor_instance(mean=(5.0, 5.0), variances=(2.25, 1.0), rho: float = 0.0,
                        h: float = 1.0, p: float = 5.0, threshold: float | None = 1.0,
                        dispersion: str = "chebyshev", q_max: float = math.inf
                        ) -> ContextualInstance:
    """Demand ``D`` and covariate ``Z``; ``dispersion`` is ``chebyshev`` or ``mad``.

    The MAD bounds are the mean absolute deviations of the bivariate normal
    with the same mean and covariance (componentwise and ``D +- Z``).
    """
    S = covariance(variances, rho)
    moments = MomentSpec((MultiMonomial((0, 0)), MultiMonomial((1, 0)), MultiMonomial((0, 1))),
                         (1.0, float(mean[0]), float(mean[1])))
    if dispersion == "chebyshev":
        disp = CovarianceUB(S.tolist())
    elif dispersion == "mad":
        dirs = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0)]
        k = math.sqrt(2 / math.pi)
        bounds = [k * math.sqrt(float(np.asarray(d) @ S @ np.asarray(d))) for d in dirs]
        disp = ComponentwiseMAD(tuple(mean), tuple(dirs), tuple(bounds))
    else:
        raise InvalidInput(f"unknown dispersion {dispersion!r}")
    spec = AmbiguitySpec(moments, disp, support=((-math.inf, math.inf),) * 2)
    return ContextualInstance(spec, covariate_event(threshold), newsvendor_cost(h, p, None, 2),
                              ((0.0, q_max),), 1, 1)


def normal_newsvendor_cost(h: float, p: float, q: float, m, s):
    """Expected cost under ``D ~ N(m, s^2)``; vectorised in ``m`` and ``s``."""
    m = np.asarray(m, dtype=float)
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = (q - m) / s
        shortfall = np.where(s > 0, s * norm.pdf(k) - (q - m) * norm.sf(k),
                             np.maximum(m - q, 0.0))
    return h * (q - m) + (h + p) * shortfall


def ground_truth_conditional_cost(mean, cov, h: float, p: float, q: float,
                                  threshold: float | None, direction: str = "ge",
                                  tol: float = 1e-12) -> float:
    """``E[C(q, D) | Z in event]`` for a bivariate normal ``(D, Z)``.

    Integrates the conditional-normal cost of ``D`` given ``Z = z`` against
    the truncated law of ``Z`` by adaptive quadrature.
    """
    cov = np.asarray(cov, dtype=float)
    if np.linalg.eigvalsh(cov)[0] < -1e-12:
        raise InvalidInput("covariance must be PSD")
    mD, mZ = float(mean[0]), float(mean[1])
    sD, sZ = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    if threshold is None:
        return float(normal_newsvendor_cost(h, p, q, mD, sD))
    if not sZ > 0:
        raise QuadratureFailure("covariate variance must be positive")
    rho = cov[0, 1] / (sD * sZ)
    k = (threshold - mZ) / sZ
    mass = norm.sf(k) if direction == "ge" else norm.cdf(k)
    if not mass > 0:
        raise QuadratureFailure("event has zero probability under the normal")
    cs = sD * math.sqrt(max(1 - rho * rho, 0.0))

    def integrand(u):
        # u is the standardised covariate
        return float(normal_newsvendor_cost(h, p, q, mD + rho * sD * u, cs)) * norm.pdf(u)

    lo, hi = (k, math.inf) if direction == "ge" else (-math.inf, k)
    val, err = quad(integrand, lo, hi, epsabs=tol, epsrel=tol, limit=200)
    out = val / mass
    if not (math.isfinite(out) and err <= 1e-8 * max(1.0, abs(val))):
        raise QuadratureFailure(f"quadrature did not converge (error estimate {err:.3g})")
    return out


@dataclass(frozen=True)
class NewsvendorRow:
    q: float
    rho: float
    event_threshold: float | None
    bound: float
    scarf: float
    ground_truth: float
    status: str

    def csv(self) -> dict:
        return {"q": self.q, "rho": self.rho,
                "event_threshold": "" if self.event_threshold is None else self.event_threshold,
                "bound": self.bound, "scarf": self.scarf, "ground_truth": self.ground_truth,
                "status": self.status}


def newsvendor_sweep(q_grid: Sequence[float], rho: float, threshold: float | None,
                     mean=(5.0, 5.0), variances=(2.25, 1.0), h: float = 1.0, p: float = 5.0,
                     dispersion: str = "chebyshev",
                     settings: SolverSettings = SolverSettings()) -> list[NewsvendorRow]:
    """Fixed-order bounds with the Scarf baseline and the normal ground truth."""
    inst = newsvendor_instance(mean, variances, rho, h, p, threshold, dispersion)
    solver = chebyshev_contextual if dispersion == "chebyshev" else mad_contextual
    cov = covariance(variances, rho)
    rows = []
    for q in q_grid:
        _, res = solver(inst, (float(q),), settings)
        rows.append(NewsvendorRow(float(q), rho, threshold, res.value,
                                  scarf_baseline(h, p, mean[0], math.sqrt(variances[0]), q),
                                  ground_truth_conditional_cost(mean, cov, h, p, q, threshold),
                                  res.status.value))
    return rows
