"""Exact worst-case conditional bounds for the classical ambiguity sets.

Every function returns a :class:`ClosedFormAnswer` holding the bound, the
case that fired, an extremal distribution attaining it (in the limit when an
atom sits just below the threshold) and a dual certificate
``(lam_0, ..., lam_m, lam_{m+1})`` for the moment functions listed in
``answer.dual.funcs``; ``lam_{m+1}`` is the bound itself.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import (InvalidDispersion, InvalidInput, PreconditionViolated,
                     QuarticRootNotFound, RootNotBracketed, SupportViolation)
from .model import (INF, BoundResult, Dirac, ExplicitDistribution, HalfLine,
                    PiecewisePolynomial, Status, StructuralClass, Symmetric,
                    SymmetricDiracPair, SymmetricUnimodal, UniformInterval,
                    Unstructured, dual_slack)

PP = PiecewisePolynomial
SCAN_CAP = 1e6
WEIGHT_FEAS_TOL = 1e-10


class Branch(enum.IntEnum):
    """Case index in the order the cases are listed for each bound."""

    ONE = 1
    TWO = 2
    THREE = 3


@dataclass(frozen=True)
class DualProblem:
    """Data needed to re-check a certificate."""

    funcs: tuple[PiecewisePolynomial, ...]
    values: tuple[float, ...]
    g: PiecewisePolynomial
    event: HalfLine
    structure: StructuralClass = field(default_factory=Unstructured)
    support: tuple[float, float] = (-INF, INF)

    def slack(self, lam, xs) -> tuple[float, np.ndarray]:
        return dual_slack(lam, self.funcs, self.values, self.g, self.event, self.structure, xs)

    def moments(self, dist: ExplicitDistribution) -> np.ndarray:
        return np.array([dist.expect(h, limit=True) for h in self.funcs])


@dataclass(frozen=True)
class MaximizingSequence:
    """Feasible distributions whose conditional value grows without bound."""

    family: str
    mu: float
    sigma: float

    def at(self, k: float) -> ExplicitDistribution:
        mu, s2 = self.mu, self.sigma ** 2
        if self.family == "two_point":
            w = 1.0 / (k * k * s2 + 1.0)
            return ExplicitDistribution.from_weights(
                [w, 1.0 - w], [Dirac(mu + k * s2), Dirac(mu - 1.0 / k)])
        if self.family == "symmetric":
            w = s2 / (k * k)
            return ExplicitDistribution.from_weights(
                [1.0 - w, w], [Dirac(mu), SymmetricDiracPair(mu, k)])
        if self.family == "symmetric_unimodal":
            w = 3.0 * s2 / (k * k)
            return ExplicitDistribution.from_weights(
                [1.0 - w, w], [Dirac(mu), UniformInterval(mu - k, mu + k)])
        raise InvalidInput(f"unknown family {self.family!r}")

    def describe(self) -> str:
        return {
            "two_point": "1/(k^2 s^2+1) at mu+k s^2, rest at mu-1/k",
            "symmetric": "1-s^2/k^2 at mu, s^2/(2k^2) at mu-k and mu+k",
            "symmetric_unimodal": "1-3s^2/k^2 at mu, 3s^2/k^2 uniform on [mu-k, mu+k]",
        }[self.family]


@dataclass(frozen=True)
class ClosedFormAnswer:
    result: BoundResult
    branch: Branch
    extremal: ExplicitDistribution | None
    dual: DualProblem
    sequence: MaximizingSequence | None = None

    @property
    def value(self) -> float:
        return self.result.value


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _finite(*xs: float) -> None:
    if not all(math.isfinite(x) for x in xs):
        raise InvalidInput("inputs must be finite")


def _positive_sigma(sigma: float) -> None:
    if not (math.isfinite(sigma) and sigma > 0):
        raise InvalidDispersion("sigma must be positive")


def _mv_dual(mu: float, sigma: float, t: float, g=None, structure=None,
             support=(-INF, INF)) -> DualProblem:
    return DualProblem((PP.constant(1.0), PP.identity(), PP.monomial(2)),
                       (1.0, mu, mu * mu + sigma * sigma), g or PP.identity(),
                       HalfLine(t), structure or Unstructured(), support)


def _answer(value, branch, extremal, dual, cert, status=Status.TIGHT,
            robust=None, diagnostics=()) -> ClosedFormAnswer:
    mass = extremal.mass(dual.event) if extremal is not None else None
    res = BoundResult(value, status, tuple(cert) if cert is not None else None,
                      extremal, 0.0, robust, mass, tuple(diagnostics))
    return ClosedFormAnswer(res, branch, extremal, dual)


def _divergent(branch, dual, family, mu, sigma) -> ClosedFormAnswer:
    seq = MaximizingSequence(family, mu, sigma)
    res = BoundResult(INF, Status.DIVERGENT, diagnostics=("maximizing sequence: " + seq.describe(),))
    return ClosedFormAnswer(res, branch, None, dual, seq)


def _solve_weights(points, values) -> np.ndarray:
    V = np.vander(np.asarray(points, dtype=float), len(values), increasing=True).T
    return np.linalg.solve(V, np.asarray(values, dtype=float))


# ---------------------------------------------------------------------------
# mean-variance
# ---------------------------------------------------------------------------

def bound_mean_variance(mu: float, sigma: float, t: float) -> ClosedFormAnswer:
    _finite(mu, t)
    _positive_sigma(sigma)
    dual = _mv_dual(mu, sigma, t)
    if t >= mu:
        return _divergent(Branch.TWO, dual, "two_point", mu, sigma)
    D, s2 = mu - t, sigma * sigma
    x0 = mu + s2 / D
    ext = ExplicitDistribution.from_weights(
        [s2 / (s2 + D * D), D * D / (s2 + D * D)], [Dirac(t, asymptotic=True), Dirac(x0)])
    # M(x) = (x - t)(x - x0)/(x0 - t) touches 0 at t and x - x0 at x0
    l2 = 1.0 / (x0 - t)
    cert = (l2 * t * x0, -l2 * (t + x0), l2, x0)
    return _answer(x0, Branch.ONE, ext, dual, cert)


# ---------------------------------------------------------------------------
# mean-MAD on [a, b]
# ---------------------------------------------------------------------------

def mad_threshold(mu: float, d: float, b: float) -> float:
    B = b - mu
    return mu - d * B / (2 * B - d)


def bound_mean_mad(mu: float, d: float, a: float, b: float, t: float) -> ClosedFormAnswer:
    _finite(mu, d, a, b, t)
    if not a < mu < b:
        raise SupportViolation("mean must lie strictly inside [a, b]")
    cap = 2 * (mu - a) * (b - mu) / (b - a)
    if not 0 < d <= cap * (1 + 1e-12):
        raise InvalidDispersion("MAD must lie in (0, 2(mu-a)(b-mu)/(b-a)]")
    if not a <= t <= b:
        raise SupportViolation("threshold outside the support")
    dual = DualProblem((PP.constant(1.0), PP.identity(), PP.abs_dev(mu)), (1.0, mu, d),
                       PP.identity(), HalfLine(t), Unstructured(), (a, b))
    thr = mad_threshold(mu, d, b)
    p2 = d / (2 * (b - mu))
    robust_ext = ExplicitDistribution.from_weights(
        [1 - p2, p2], [Dirac(thr, asymptotic=thr >= t), Dirac(b)])
    if t <= a:
        # the event is the whole support
        return _answer(mu, Branch.ONE, robust_ext if thr > a else _mad_interior(mu, d, a, b),
                       dual, (-mu, 1.0, 0.0, mu), robust=b,
                       diagnostics=("threshold at the lower support end",))
    if t < thr:
        D = mu - t
        val = mu + d * D / (2 * D - d)
        p1 = d / (2 * D)
        ext = ExplicitDistribution.from_weights([p1, 1 - p1], [Dirac(t, asymptotic=True), Dirac(val)])
        den = 2 * (t - mu)
        cert = (((t + val) * mu - 2 * t * val) / den, (val + t - 2 * mu) / den, (t - val) / den, val)
        return _answer(val, Branch.ONE, ext, dual, cert, robust=b)
    return _answer(b, Branch.TWO, robust_ext, dual, (0.0, 0.0, 0.0, b),
                   status=Status.UNINFORMATIVE, robust=b)


def _mad_interior(mu, d, a, b) -> ExplicitDistribution:
    # MAD at its cap: all mass on the endpoints
    w = (b - mu) / (b - a)
    return ExplicitDistribution.from_weights([w, 1 - w], [Dirac(a), Dirac(b)])


# ---------------------------------------------------------------------------
# mean and a convex dispersion function
# ---------------------------------------------------------------------------

def _right_derivative(f: PiecewisePolynomial, x: float) -> float:
    return float(f.piece_at(x).deriv()(x))


def is_convex(f: PiecewisePolynomial, tol: float = 1e-12) -> bool:
    for i in range(len(f.pieces)):
        lo = f.breakpoints[i - 1] if i > 0 else -INF
        hi = f.breakpoints[i] if i < len(f.breakpoints) else INF
        curv = PP.polynomial(tuple(f.piece(i).deriv(2).coef))
        if -(-curv).sup_on(lo, hi) < -tol:
            return False
    for b in f.breakpoints:
        left = float(f.piece(int(f.piece_index(b)) - 1).deriv()(b))
        if _right_derivative(f, b) < left - tol * max(1.0, abs(left)):
            return False
    return True


def bound_mean_convex_dispersion(mu: float, level: float, d: PiecewisePolynomial,
                                 t: float) -> ClosedFormAnswer:
    _finite(mu, level, t)
    if not is_convex(d):
        raise InvalidDispersion("dispersion function is not convex")
    d_mu = float(d(mu))
    if not level > d_mu:
        raise InvalidDispersion("dispersion level must exceed its value at the mean")
    dual = DualProblem((PP.constant(1.0), PP.identity(), d), (1.0, mu, level),
                       PP.identity(), HalfLine(t))
    if t >= mu:
        res = BoundResult(math.nan, Status.NO_FEASIBLE_TANGENT,
                          diagnostics=("no tangent point with feasible weights for t >= mean",))
        return ClosedFormAnswer(res, Branch.ONE, None, dual)
    d_t = float(d(t))

    def F(x):
        return (t - x) * level + (x - mu) * d_t + (mu - t) * float(d(x))

    scale = max(1.0, abs(mu), abs(t))
    lo, step = mu, scale
    hi = mu + step
    while F(hi) <= 0:
        lo = hi
        step *= 2
        hi = mu + step
        if hi > mu + SCAN_CAP * scale:
            raise RootNotBracketed("no sign change of the tangency equation below the scan cap")
    x0 = brentq(F, lo, hi, xtol=1e-14 * scale, rtol=4 * np.finfo(float).eps, maxiter=500)
    pt = (x0 - mu) / (x0 - t)
    px = (mu - t) / (x0 - t)
    disp = pt * d_t + px * float(d(x0))
    ok = (-WEIGHT_FEAS_TOL <= pt <= 1 + WEIGHT_FEAS_TOL and -WEIGHT_FEAS_TOL <= px <= 1 + WEIGHT_FEAS_TOL
          and x0 > t and abs(disp - level) <= 1e-8 * max(1.0, abs(level)))
    if not ok:
        res = BoundResult(math.nan, Status.NO_FEASIBLE_TANGENT,
                          diagnostics=(f"tangent point {x0!r} gives infeasible weights",))
        return ClosedFormAnswer(res, Branch.ONE, None, dual)
    ext = ExplicitDistribution.from_weights([pt, px], [Dirac(t, asymptotic=True), Dirac(x0)])
    dp = _right_derivative(d, x0)
    den = (t - mu) * dp - d_t + level
    cert = ((mu * d_t - level * t) / den, (level - d_t) / den, (t - mu) / den, x0)
    return _answer(x0, Branch.ONE, ext, dual, cert)


# ---------------------------------------------------------------------------
# symmetric and symmetric unimodal
# ---------------------------------------------------------------------------

def bound_symmetric(mu: float, sigma: float, t: float) -> ClosedFormAnswer:
    _finite(mu, t)
    _positive_sigma(sigma)
    dual = _mv_dual(mu, sigma, t, structure=Symmetric(mu))
    # at t == mu the event keeps half the mass and E|X - mu| <= sigma keeps the bound finite
    if t > mu:
        return _divergent(Branch.THREE, dual, "symmetric", mu, sigma)
    D, s2 = mu - t, sigma * sigma
    if D > sigma:
        l2 = D / (2 * D * D - s2)
        val = mu + l2 * s2
        p = s2 / (D * D)
        ext = ExplicitDistribution.from_weights(
            [1 - p, p], [Dirac(mu), SymmetricDiracPair(mu, D, asymptotic=True)])
        branch = Branch.ONE
    else:
        l2 = 1.0 / (4 * sigma)
        val = mu + sigma
        ext = ExplicitDistribution.from_weights(
            [1.0], [SymmetricDiracPair(mu, sigma, asymptotic=D == sigma)])
        branch = Branch.TWO
    return _answer(val, branch, ext, dual, _centered_cert(mu, sigma, l2, val))


def _centered_cert(mu, sigma, l2, l3):
    # only lam_0 + lam_1 mu + lam_2 mu^2 matters under symmetry about mu;
    # pick lam_1 = 0 and make the moment row tight
    kappa = -l2 * sigma * sigma
    return (kappa - l2 * mu * mu, 0.0, l2, l3)


def unimodal_threshold(mu: float, sigma: float) -> float:
    """Below this threshold the worst case keeps an atom at the mode."""
    return mu - 0.6 * math.sqrt(3) * sigma


def unimodal_quartic(x: float, D: float, sigma: float) -> float:
    """Numerator of the derivative of the reduced objective in the half-width
    ``x`` of the uniform component (``D = mu - t``); positive means increasing."""
    s2 = sigma * sigma
    return -4 * x ** 4 + 6 * (2 * D * D - s2) * x * x + 12 * s2 * D * x - 6 * s2 * D * D


def unimodal_value(mu: float, sigma: float, t: float, x0: float) -> float:
    s2 = sigma * sigma
    num = 4 * mu * x0 ** 3 - 3 * s2 * (t + x0 - mu) * (t - x0 + mu)
    return num / (4 * x0 ** 3 - 6 * s2 * (t + x0 - mu))


def _unimodal_root(D: float, sigma: float) -> tuple[float, list[str]]:
    lo = math.sqrt(3) * sigma
    s2 = sigma * sigma
    coeffs = [-4.0, 0.0, 6 * (2 * D * D - s2), 12 * s2 * D, -6 * s2 * D * D]
    real = sorted(r.real for r in np.roots(coeffs) if abs(r.imag) <= 1e-9 * max(1.0, abs(r)))
    admissible = [r for r in real if r >= lo * (1 - 1e-12)]
    notes = [f"quartic real roots: {', '.join(f'{r:.12g}' for r in real)}"]
    if len(admissible) != 1:
        notes.append(f"expected one admissible root, found {len(admissible)}")
    hi = 2 * lo
    while unimodal_quartic(hi, D, sigma) > 0:
        hi *= 2
        if hi > SCAN_CAP * max(1.0, D, sigma):
            raise QuarticRootNotFound("no admissible quartic root below the scan cap")
    if unimodal_quartic(lo, D, sigma) < 0:
        raise QuarticRootNotFound("quartic has no sign change on the admissible range")
    x0 = brentq(lambda x: unimodal_quartic(x, D, sigma), lo, hi,
                xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
    return x0, notes


def bound_symmetric_unimodal(mu: float, sigma: float, t: float) -> ClosedFormAnswer:
    _finite(mu, t)
    _positive_sigma(sigma)
    dual = _mv_dual(mu, sigma, t, structure=SymmetricUnimodal(mu))
    if t > mu:
        return _divergent(Branch.THREE, dual, "symmetric_unimodal", mu, sigma)
    D, s2 = mu - t, sigma * sigma
    notes: list[str] = []
    if t < unimodal_threshold(mu, sigma):
        x0, notes = _unimodal_root(D, sigma)
        val = unimodal_value(mu, sigma, t, x0)
        p = 3 * s2 / (x0 * x0)
        ext = ExplicitDistribution.from_weights(
            [1 - p, p], [Dirac(mu), UniformInterval(mu - x0, mu + x0)])
        branch = Branch.ONE
    else:
        x0 = math.sqrt(3) * sigma
        val = 0.5 * (mu + t + x0)
        ext = ExplicitDistribution.from_weights([1.0], [UniformInterval(mu - x0, mu + x0)])
        branch = Branch.TWO
    # the averaged dual function vanishes at x0; with an atom at the mode the
    # mode row is tight as well, otherwise the function is tangent at x0
    c2 = -2 * s2 * x0 + 2 * x0 ** 3 / 3
    rhs = ((mu + x0) ** 2 - t * t) / 2
    if branch is Branch.ONE:
        l2 = (rhs - mu * (mu + x0 - t)) / (c2 + s2 * (mu + x0 - t))
        l3 = mu + l2 * s2
    else:
        A = np.array([[c2, mu + x0 - t], [2 * x0 * x0 - 2 * s2, 1.0]])
        l2, l3 = np.linalg.solve(A, np.array([rhs, mu + x0]))
    if abs(l3 - val) > 1e-8 * max(1.0, abs(val)):
        notes.append(f"certificate value {l3!r} differs from bound")
    return _answer(val, branch, ext, dual, _centered_cert(mu, sigma, l2, val), diagnostics=notes)


# ---------------------------------------------------------------------------
# conditional tail probability on [0, inf)
# ---------------------------------------------------------------------------

def tail_thresholds(mu: float, sigma: float, p: float) -> tuple[float, float]:
    """``(lower, upper)``; ``upper`` is inf when the two-point case never fires."""
    D, s2 = mu - p, sigma * sigma
    lower = mu + s2 / D
    upper = mu + 2 * s2 * D / (D * D - s2) if D > sigma else INF
    return lower, upper


def bound_conditional_tail_probability(mu: float, sigma: float, p: float,
                                       z: float) -> ClosedFormAnswer:
    _finite(mu, p, z)
    _positive_sigma(sigma)
    if z < p:
        raise PreconditionViolated("need z >= p")
    if p >= mu:
        raise PreconditionViolated("need p < mean")
    if p <= 0:
        raise PreconditionViolated("need p > 0 on a nonnegative support")
    D, s2 = mu - p, sigma * sigma
    S = D * D + s2
    dual = DualProblem((PP.constant(1.0), PP.identity(), PP.monomial(2)), (1.0, mu, mu * mu + s2),
                       PP.step(z), HalfLine(p), Unstructured(), (0.0, INF))
    lower, upper = tail_thresholds(mu, sigma, p)
    if z <= lower:
        ext = ExplicitDistribution.from_weights(
            [s2 / S, D * D / S], [Dirac(p, asymptotic=True), Dirac(lower)])
        return _answer(1.0, Branch.THREE, ext, dual, (0.0, 0.0, 0.0, 1.0), robust=1.0)
    if z >= upper:
        E = z - mu
        den = s2 + E * E
        val = s2 / den
        x0 = mu - s2 / E
        ext = ExplicitDistribution.from_weights([E * E / den, s2 / den], [Dirac(x0), Dirac(z)])
        cert = (E * (mu * mu * E - s2 * (mu + z)) / den ** 2,
                2 * E * (mu * mu + s2 - mu * z) / den ** 2, E * E / den ** 2, val)
        return _answer(val, Branch.ONE, ext, dual, cert, robust=1.0)
    x0 = p + S / (2 * D)
    val = (S / (2 * z * D - s2 - mu * mu + p * p)) ** 2
    w = _solve_weights([p, x0, z], [1.0, mu, mu * mu + s2])
    ext = ExplicitDistribution.from_weights(
        w, [Dirac(p, asymptotic=True), Dirac(x0), Dirac(z)])
    l2 = 1.0 / (z - x0) ** 2
    cert = (l2 * x0 * x0 - val, -2 * l2 * x0, l2, val)
    return _answer(val, Branch.TWO, ext, dual, cert, robust=1.0)


# ---------------------------------------------------------------------------
# regret-optimal price
# ---------------------------------------------------------------------------

def regret_branches(mu: float, sigma: float, p: float) -> tuple[float, float]:
    """Worst-case regret ratio over prices below and above ``p``."""
    D, s2 = mu - p, sigma * sigma
    return (s2 + D * D) / (D * D), (s2 + mu * D) / (p * D)


def optimal_regret_price(mu: float, sigma: float) -> tuple[float, float]:
    _finite(mu)
    _positive_sigma(sigma)
    if mu <= 0:
        raise PreconditionViolated("mean must be positive")
    s2 = sigma * sigma

    # sign of (second branch - first branch) times p (mu - p)^2; strictly decreasing in p
    def f(p):
        return s2 * (mu - 2 * p) + (mu - p) ** 3

    lo, hi = 0.0, mu
    if not (f(lo) > 0 > f(hi)):
        raise RootNotBracketed("branch difference does not change sign on (0, mean)")
    p = brentq(f, lo, hi, xtol=1e-15 * mu, rtol=4 * np.finfo(float).eps, maxiter=500)
    if not 0 < p < mu:
        raise RootNotBracketed("price root collapsed onto the interval end")
    return p, max(regret_branches(mu, sigma, p))
