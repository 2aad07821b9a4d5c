"""Numerical conditional bounds from polynomial nonnegativity certificates.

The dual of the conditional moment problem asks for multipliers ``lam`` and a
level ``tau`` such that

    sum_j lam_j h_j(x) + (tau - g(x)) 1_event(x) >= 0   on the support,
    sum_j lam_j q_j <= 0,

and minimises ``tau``.  On every cell of the common breakpoint partition the
left-hand side is a polynomial whose coefficients are affine in ``(lam, tau)``;
each cell constraint becomes Gram-matrix (PSD) blocks.

Structured classes are handled through their generators: for symmetric
distributions the constraint is imposed on ``f(c - x) + f(c + x)`` for offsets
``x >= 0``, for symmetric unimodal ones on ``int_{c-x}^{c+x} f`` plus a point
row at the mode.

Everything is solved in standardised coordinates ``y = (x - c0)/s0``; power
rows are re-expanded around ``c0`` and certificates are mapped back.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .conic import (Outcome, ProgramBuilder, SolverSettings, Terms, ConeProgram,
                    OUTCOME_TO_STATUS, solve)
from .errors import (CondboundError, DegreeMismatch, EmptyInterval, InvalidInput,
                     UnsupportedEvent)
from .model import (INF, AmbiguitySpec, BoundResult, EventSet, FullSpace, Halfspace,
                    HalfLine, Interval, MomentRow, MomentSpec, PiecewisePolynomial,
                    Status, StructuralClass, Symmetric, SymmetricUnimodal,
                    Unstructured, shift_matrix)

PP = PiecewisePolynomial
DIVERGENCE_SCALE = 1e8
MASS_PENALTIES = (1e6, 1e4, 1e3)
SLACK_TOL = 1e-7
Coeffs = list  # [(Terms, const)] ascending in degree


# ---------------------------------------------------------------------------
# nonnegativity on an interval
# ---------------------------------------------------------------------------

def _trim_coeffs(coeffs: Coeffs) -> Coeffs:
    out = list(coeffs)
    while len(out) > 1 and not any(out[-1][0].values()) and out[-1][1] == 0.0:
        out.pop()
    return out


def _multipliers(d: int, lo: float, hi: float) -> list[tuple[Polynomial, int]]:
    """``(weight, gram size)`` pairs of a minimal-degree representation."""
    one = Polynomial([1.0])
    if math.isinf(lo) and math.isinf(hi):
        return [(one, d // 2 + 1)]
    if math.isinf(hi) or math.isinf(lo):
        w = Polynomial([-lo, 1.0]) if math.isfinite(lo) else Polynomial([hi, -1.0])
        out = [(one, d // 2 + 1)]
        if d >= 1:
            out.append((w, (d - 1) // 2 + 1))
        return out
    left, right = Polynomial([-lo, 1.0]), Polynomial([hi, -1.0])
    if d == 0:
        return [(one, 1)]
    if d % 2 == 0:
        return [(one, d // 2 + 1), (left * right, (d - 2) // 2 + 1)]
    return [(left, (d - 1) // 2 + 1), (right, (d - 1) // 2 + 1)]


def add_nonneg_on_interval(b: ProgramBuilder, coeffs: Coeffs, lo: float, hi: float) -> None:
    """Constrain ``p(x) = sum_k (terms_k . vars + const_k) x^k >= 0`` on ``[lo, hi]``."""
    if not lo <= hi:
        raise EmptyInterval(f"empty interval [{lo}, {hi}]")
    coeffs = _trim_coeffs(coeffs)
    d = len(coeffs) - 1
    if lo == hi:
        val: Terms = {}
        const = 0.0
        for k, (terms, c) in enumerate(coeffs):
            for v, a in terms.items():
                val[v] = val.get(v, 0.0) + a * lo ** k
            const += c * lo ** k
        b.nonneg(val, const)
        return
    if math.isinf(lo) and math.isinf(hi) and d % 2:
        # an odd leading coefficient must vanish
        terms, c = coeffs[-1]
        b.equality(terms, -c)
        coeffs = coeffs[:-1]
        d -= 1
    if d == 0:
        terms, c = coeffs[0]
        b.nonneg(terms, c)
        return
    acc: list[Terms] = [dict() for _ in range(d + 1)]
    for w, size in _multipliers(d, lo, hi):
        gram = b.gram(size)
        for k, terms in enumerate(gram):
            for l, wl in enumerate(w.coef):
                if wl != 0.0 and k + l <= d:
                    for v, a in terms.items():
                        acc[k + l][v] = acc[k + l].get(v, 0.0) + wl * a
    for k in range(d + 1):
        terms, c = coeffs[k]
        row = dict(terms)
        for v, a in acc[k].items():
            row[v] = row.get(v, 0.0) - a
        b.equality(row, -c)


def nonneg_on_interval(p, interval: tuple[float, float]) -> ConeProgram:
    """Feasibility program certifying ``p >= 0`` on ``interval``.

    ``p`` is a :class:`numpy.polynomial.Polynomial` or ascending coefficients.
    """
    coef = p.coef if isinstance(p, Polynomial) else np.asarray(p, dtype=float)
    lo, hi = interval
    if not lo <= hi:
        raise EmptyInterval(f"empty interval [{lo}, {hi}]")
    b = ProgramBuilder()
    add_nonneg_on_interval(b, [({}, float(c)) for c in coef], float(lo), float(hi))
    return b.build()


# ---------------------------------------------------------------------------
# problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualBoundProblem:
    """``sup E[g(X) | X in event]`` over distributions with the given
    moments, optional extra rows (dispersion), structure and support."""

    moments: MomentSpec
    event: EventSet
    objective: PiecewisePolynomial
    structure: StructuralClass = field(default_factory=Unstructured)
    support: tuple[float, float] = (-INF, INF)
    extra_rows: tuple[MomentRow, ...] = ()

    def __post_init__(self):
        if self.moments.power_order() is None:
            raise InvalidInput("moment basis must be 1, x, ..., x^m")
        lo, hi = self.support
        if not lo < hi:
            raise EmptyInterval("support must have lo < hi")
        ev = self.event
        if isinstance(ev, Halfspace):
            object.__setattr__(self, "event", ev.as_halfline())
        elif not isinstance(ev, (HalfLine, Interval, FullSpace)):
            raise UnsupportedEvent(f"unsupported event {type(ev).__name__}")
        if getattr(self.event, "dimension", 1) != 1:
            raise UnsupportedEvent("univariate events only")

    @classmethod
    def from_spec(cls, spec: AmbiguitySpec, event: EventSet,
                  objective: PiecewisePolynomial) -> "DualBoundProblem":
        rows = spec.rows()
        m = 0
        while m + 1 < len(rows) and rows[m + 1].func == PP.monomial(m + 1):
            m += 1
        moments = MomentSpec.power([r.value for r in rows[:m + 1]])
        return cls(moments, event, objective, spec.structure, spec.support_interval,
                   tuple(rows[m + 1:]))

    @property
    def order(self) -> int:
        return self.moments.order

    def funcs(self) -> tuple[PiecewisePolynomial, ...]:
        return tuple(self.moments.basis) + tuple(r.func for r in self.extra_rows)

    def values(self) -> tuple[float, ...]:
        return tuple(self.moments.values) + tuple(r.value for r in self.extra_rows)

    def with_event(self, event: EventSet) -> "DualBoundProblem":
        return dataclasses.replace(self, event=event)

    def robust_value(self) -> float:
        lo, hi = self.event.clip(*self.support)
        return self.objective.sup_on(lo, hi)


# ---------------------------------------------------------------------------
# standardisation and generator transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Frame:
    c0: float
    s0: float
    funcs: tuple[PiecewisePolynomial, ...]   # rows in y
    values: tuple[float, ...]
    back: np.ndarray                          # lam = back @ lam_std


def _frame(prob: DualBoundProblem) -> _Frame:
    q = np.asarray(prob.moments.values)
    m = prob.order
    c0 = q[1] if m >= 1 else 0.0
    var = q[2] - q[1] ** 2 if m >= 2 else 0.0
    s0 = math.sqrt(var) if var > 0 else 1.0
    T = shift_matrix(m, c0, s0)
    n = m + 1 + len(prob.extra_rows)
    back = np.zeros((n, n))
    back[:m + 1, :m + 1] = T.T
    funcs = [PP.monomial(j) for j in range(m + 1)]
    values = list(T @ q)
    for k, row in enumerate(prob.extra_rows, start=m + 1):
        f = row.func.compose_affine(c0, s0)
        f0 = float(f(0.0))
        scale = max(1.0, max(abs(c) for piece in f.pieces for c in piece))
        funcs.append((f - f0) * (1.0 / scale))
        values.append((row.value - f0) / scale)
        back[k, k] = 1.0 / scale
        back[0, k] = -f0 / scale
    return _Frame(c0, s0, tuple(funcs), tuple(values), back)


def _transform(f: PiecewisePolynomial, structure, c: float) -> PiecewisePolynomial:
    if isinstance(structure, Symmetric):
        return f.compose_affine(c, -1.0) + f.compose_affine(c, 1.0)
    if isinstance(structure, SymmetricUnimodal):
        A = f.antiderivative()
        return A.compose_affine(c, 1.0) - A.compose_affine(c, -1.0)
    return f


def _point_value(f: PiecewisePolynomial, structure, c: float, x: float) -> float:
    if isinstance(structure, Symmetric):
        return float(f(c - x)) + float(f(c + x))
    return float(f(c + x))


# ---------------------------------------------------------------------------
# program assembly
# ---------------------------------------------------------------------------

@dataclass
class _Assembly:
    builder: ProgramBuilder
    lam: np.ndarray
    tau: int | None
    frame: _Frame


def _assemble(prob: DualBoundProblem, target: PiecewisePolynomial, with_tau: bool,
              tau_func: PiecewisePolynomial | None) -> _Assembly:
    """Constraint ``sum lam_j T[h_j] + tau T[tau_func] - T[target] >= 0``."""
    fr = _frame(prob)
    c0, s0 = fr.c0, fr.s0
    b = ProgramBuilder()
    lam = b.variables(len(fr.funcs))
    tau = int(b.variables(1)[0]) if with_tau else None
    target_y = target.compose_affine(c0, s0)
    basis = list(zip([int(v) for v in lam], fr.funcs))
    if with_tau:
        basis.append((tau, tau_func.compose_affine(c0, s0)))
    st = prob.structure
    lo = (prob.support[0] - c0) / s0
    hi = (prob.support[1] - c0) / s0
    if isinstance(st, (Symmetric, SymmetricUnimodal)):
        c = (st.center - c0) / s0
        lo, hi = 0.0, min(c - lo, hi - c)
        if not hi > 0:
            raise InvalidInput("structure center must lie inside the support")
    else:
        c = 0.0
    tf = [(v, _transform(f, st, c)) for v, f in basis]
    tg = _transform(target_y, st, c)
    bps = sorted({p for _, f in tf for p in f.breakpoints} | set(tg.breakpoints))
    cuts = [lo] + [p for p in bps if lo < p < hi] + [hi]
    unimodal = isinstance(st, SymmetricUnimodal)
    for a, z in zip(cuts, cuts[1:]):
        polys = [(v, f.cell_piece(a, z)) for v, f in tf]
        g_poly = tg.cell_piece(a, z)
        if unimodal and a == 0.0:
            polys = [(v, Polynomial(p.coef[1:] if len(p.coef) > 1 else [0.0])) for v, p in polys]
            g_poly = Polynomial(g_poly.coef[1:] if len(g_poly.coef) > 1 else [0.0])
        _cell(b, polys, g_poly, a, z)
    # atoms sitting exactly on a breakpoint, the center or a finite support end
    if unimodal:
        pts = [0.0]
    else:
        pts = sorted({x for x in cuts if math.isfinite(x)} | {p for p in bps if lo <= p <= hi})
    for x in pts:
        terms = {v: _point_value(f, st, c, x) for v, f in basis}
        b.nonneg(terms, -_point_value(target_y, st, c, x))
    return _Assembly(b, lam, tau, fr)


def _cell(b: ProgramBuilder, polys, g_poly: Polynomial, a: float, z: float) -> None:
    # map the cell to [-1, 1] or [0, inf) for conditioning
    if math.isfinite(a) and math.isfinite(z):
        sub, lo, hi = Polynomial([(a + z) / 2, (z - a) / 2]), -1.0, 1.0
    elif math.isfinite(a):
        sub, lo, hi = Polynomial([a, 1.0]), 0.0, INF
    elif math.isfinite(z):
        sub, lo, hi = Polynomial([z, -1.0]), 0.0, INF
    else:
        sub, lo, hi = Polynomial([0.0, 1.0]), -INF, INF
    mapped = [(v, p(sub).coef) for v, p in polys]
    g_coef = g_poly(sub).coef
    d = max([len(cf) for _, cf in mapped] + [len(g_coef)]) - 1
    coeffs: Coeffs = []
    for k in range(d + 1):
        terms = {v: float(cf[k]) for v, cf in mapped if k < len(cf) and cf[k] != 0.0}
        const = -float(g_coef[k]) if k < len(g_coef) else 0.0
        coeffs.append((terms, const))
    add_nonneg_on_interval(b, coeffs, lo, hi)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def _scale(prob: DualBoundProblem) -> float:
    fr_c = abs(prob.moments.values[1]) if prob.order >= 1 else 0.0
    return max(1.0, fr_c, abs(prob.objective.sup_on(*prob.support)) if math.isfinite(
        prob.objective.sup_on(*prob.support)) else 1.0)


def dual_bound(prob: DualBoundProblem, settings: SolverSettings = SolverSettings()) -> BoundResult:
    """Tight upper bound on ``E[g(X) | X in event]``."""
    if prob.order < 2 and not prob.extra_rows:
        raise InvalidInput("need moments up to order 2 or a dispersion row")
    ind = prob.event.indicator()
    # elastic moment row: a positive slack means the worst case needs event
    # mass below 1/penalty, i.e. the bound escapes to infinity; smaller
    # penalties are retried when the backend stalls
    for penalty in MASS_PENALTIES:
        asm = _assemble(prob, prob.objective * ind, True, ind)
        b, fr = asm.builder, asm.frame
        slack = int(b.variables(1)[0])
        b.nonneg({slack: 1.0})
        row = {int(v): -q for v, q in zip(asm.lam, fr.values)}
        row[slack] = 1.0
        b.nonneg(row)
        b.minimize({asm.tau: 1.0, slack: penalty})
        out = solve(b.build(), settings)
        status = OUTCOME_TO_STATUS[out.status]
        if status is not Status.NUMERICAL_TROUBLE:
            break
    if status is not Status.TIGHT:
        notes = (f"backend status {out.backend_status}",)
        if status is Status.DIVERGENT:
            return BoundResult(INF, status, diagnostics=notes)
        return BoundResult(math.nan, status, diagnostics=notes)
    value = float(out.x[asm.tau])
    if out.x[slack] > SLACK_TOL * max(1.0, abs(value)):
        return BoundResult(INF, Status.DIVERGENT, diagnostics=(
            f"event mass floor {1 / penalty:g} reached (slack {out.x[slack]:.3g}, "
            f"capped value {value:.6g})",))
    lam = fr.back @ out.x[asm.lam]
    cert = tuple(lam) + (value,)
    gap = abs(out.objective - out.dual_objective)
    notes = [f"backend status {out.backend_status}"]
    robust = prob.robust_value()
    scale = _scale(prob)
    if value > DIVERGENCE_SCALE * scale:
        notes.append("value exceeds the divergence scale")
        return BoundResult(value, Status.NUMERICAL_TROUBLE, cert, None, gap, robust,
                           diagnostics=tuple(notes))
    status = Status.TIGHT
    if out.reduced_accuracy:
        notes.append("reduced accuracy")
    if math.isfinite(robust) and value >= robust - 1e-6 * max(1.0, abs(robust)):
        status = Status.UNINFORMATIVE
    return BoundResult(value, status, cert, None, gap, robust, diagnostics=tuple(notes))


def moment_bound(prob: DualBoundProblem, target: PiecewisePolynomial,
                 settings: SolverSettings = SolverSettings()) -> float:
    """``sup E[target(X)]`` over the ambiguity set of ``prob`` (event ignored).

    Returns ``inf`` when the certificate system is infeasible.
    """
    asm = _assemble(prob, target, False, None)
    b, fr = asm.builder, asm.frame
    b.minimize({int(v): q for v, q in zip(asm.lam, fr.values)})
    out = solve(b.build(), settings)
    status = OUTCOME_TO_STATUS[out.status]
    if status is Status.DIVERGENT:
        return INF
    if status is not Status.TIGHT:
        raise CondboundError(f"moment bound failed: {out.backend_status}")
    return out.objective


def conditional_phi(prob: DualBoundProblem, settings: SolverSettings = SolverSettings()
                    ) -> Callable[[float], float]:
    """``tau -> sup E[(g - tau) 1_event]`` for the parametric reformulation."""
    ind = prob.event.indicator()

    def phi(tau: float) -> float:
        return moment_bound(prob, (prob.objective - tau) * ind, settings)

    return phi


# ---------------------------------------------------------------------------
# sweeps and figure data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    t: float
    result: BoundResult
    wall_ms: float

    def csv(self) -> dict:
        return {"t": self.t, "value": self.result.value, "status": self.result.status.value,
                "gap": self.result.gap, "wall_ms": self.wall_ms}


def sweep(template: DualBoundProblem, t_grid: Sequence[float],
          settings: SolverSettings = SolverSettings(),
          event_of: Callable[[float], EventSet] | None = None) -> list[SweepRow]:
    """Independent ``dual_bound`` solves over a sorted threshold grid."""
    ts = [float(t) for t in t_grid]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise InvalidInput("threshold grid must be sorted")
    make = event_of or (lambda t: HalfLine(t))
    rows = []
    for t in ts:
        t0 = time.perf_counter()
        try:
            res = dual_bound(template.with_event(make(t)), settings)
        except CondboundError as exc:
            res = BoundResult(math.nan, Status.NUMERICAL_TROUBLE, diagnostics=(str(exc),))
        rows.append(SweepRow(t, res, 1e3 * (time.perf_counter() - t0)))
    return rows


def uniform_moments(lo: float, hi: float, m: int) -> tuple[float, ...]:
    """``E[X^j]`` for ``X ~ Uniform[lo, hi]``, exact until the final rounding."""
    a, b = Fraction(lo), Fraction(hi)
    return tuple(float((b ** (j + 1) - a ** (j + 1)) / ((j + 1) * (b - a))) for j in range(m + 1))


def normal_moments(mu: float, sigma: float, m: int) -> tuple[float, ...]:
    """``E[X^j]`` for ``X ~ N(mu, sigma^2)``."""
    central = [Fraction(0)] * (m + 1)
    central[0] = Fraction(1)
    for j in range(2, m + 1, 2):
        central[j] = central[j - 2] * (j - 1)
    mu_f, s = Fraction(mu), Fraction(sigma)
    out = []
    for j in range(m + 1):
        out.append(float(sum(math.comb(j, k) * mu_f ** (j - k) * central[k] * s ** k
                             for k in range(j + 1))))
    return tuple(out)
