"""Domain types shared by the solvers.

Conventions used throughout the package:

* A piecewise polynomial takes its value at a breakpoint from the piece on
  the right.
* An atom that has to sit "just below" a threshold ``t`` (so that it stays
  outside an event ``{x >= t}`` while the bound is approached in the limit)
  is stored with ``asymptotic=True``.  It is evaluated at ``t - eps_atom(t)``
  for event membership and objective values, and at ``t`` itself when moments
  are compared in the limit.
* Divergent bounds carry ``value = inf`` in memory and ``null`` in JSON.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidInput, ZeroEventMass

FEAS_TOL = 1e-8
GAP_ABS_TOL = 1e-6
GAP_REL_TOL = 1e-4
WEIGHT_TOL = 1e-12
ATOM_REL_EPS = 1e-7

INF = math.inf


def eps_atom(t: float) -> float:
    """Offset used to realise an atom at ``t`` approached from one side."""
    return ATOM_REL_EPS * max(1.0, abs(t))


def _floats(xs: Iterable[float]) -> tuple[float, ...]:
    return tuple(float(x) for x in xs)


def _representative(lo: float, hi: float) -> float:
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(lo):
        return hi - 1.0
    if math.isinf(hi):
        return lo + 1.0
    return 0.5 * (lo + hi)


def _trim(coeffs: Sequence[float]) -> tuple[float, ...]:
    c = list(coeffs)
    while len(c) > 1 and c[-1] == 0.0:
        c.pop()
    return tuple(float(v) for v in c) if c else (0.0,)


# ---------------------------------------------------------------------------
# Piecewise polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewisePolynomial:
    """Univariate piecewise polynomial with ascending coefficient vectors.

    ``pieces[i]`` is active on ``[breakpoints[i-1], breakpoints[i])``; the
    first piece extends to ``-inf`` and the last one to ``+inf``.
    """

    breakpoints: tuple[float, ...] = ()
    pieces: tuple[tuple[float, ...], ...] = ((0.0,),)
    domain: tuple[float, float] = (-INF, INF)

    def __post_init__(self):
        bps = _floats(self.breakpoints)
        pieces = tuple(_floats(p) if len(p) else (0.0,) for p in self.pieces)
        object.__setattr__(self, "breakpoints", bps)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "domain", _floats(self.domain))
        if len(pieces) != len(bps) + 1:
            raise InvalidInput("need exactly one more piece than breakpoints")
        if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
            raise InvalidInput("breakpoints must be strictly increasing")
        if not all(math.isfinite(b) for b in bps):
            raise InvalidInput("breakpoints must be finite")
        if not all(math.isfinite(c) for p in pieces for c in p):
            raise InvalidInput("coefficients must be finite")

    # constructors -------------------------------------------------------
    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> "PiecewisePolynomial":
        return cls((), (tuple(coeffs),))

    @classmethod
    def constant(cls, c: float) -> "PiecewisePolynomial":
        return cls((), ((c,),))

    @classmethod
    def monomial(cls, k: int) -> "PiecewisePolynomial":
        return cls((), (tuple([0.0] * k + [1.0]),))

    @classmethod
    def identity(cls) -> "PiecewisePolynomial":
        return cls.monomial(1)

    @classmethod
    def abs_dev(cls, center: float) -> "PiecewisePolynomial":
        return cls((center,), ((center, -1.0), (-center, 1.0)))

    @classmethod
    def step(cls, c: float) -> "PiecewisePolynomial":
        """Indicator of ``[c, inf)``."""
        return cls((c,), ((0.0,), (1.0,)))

    @classmethod
    def stop_loss(cls, c: float) -> "PiecewisePolynomial":
        """``max(x - c, 0)``."""
        return cls((c,), ((0.0,), (-c, 1.0)))

    @classmethod
    def huber(cls, knee: float, center: float = 0.0) -> "PiecewisePolynomial":
        k, c = knee, center
        left = Polynomial([-c, -1.0]) * k - 0.5 * k * k
        mid = 0.5 * Polynomial([-c, 1.0]) ** 2
        right = Polynomial([-c, 1.0]) * k - 0.5 * k * k
        return cls((c - k, c + k), (tuple(left.coef), tuple(mid.coef), tuple(right.coef)))

    # evaluation ---------------------------------------------------------
    def piece_index(self, x):
        return np.searchsorted(np.asarray(self.breakpoints), x, side="right")

    def piece(self, i: int) -> Polynomial:
        return Polynomial(self.pieces[i])

    def piece_at(self, x: float) -> Polynomial:
        return self.piece(int(self.piece_index(x)))

    def cell_piece(self, lo: float, hi: float) -> Polynomial:
        """Piece active in the interior of ``(lo, hi)``."""
        return self.piece_at(_representative(lo, hi))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = self.piece_index(x)
        out = np.zeros_like(x)
        for i, coeffs in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = np.polynomial.polynomial.polyval(x[mask], coeffs)
        return out if out.ndim else float(out)

    def left_value(self, b: float) -> float:
        i = int(np.searchsorted(np.asarray(self.breakpoints), b, side="left"))
        return float(self.piece(i)(b))

    @property
    def degree(self) -> int:
        return max(len(_trim(p)) - 1 for p in self.pieces)

    @property
    def is_polynomial(self) -> bool:
        return len(self.pieces) == 1

    # algebra ------------------------------------------------------------
    def refine(self, points: Iterable[float]) -> "PiecewisePolynomial":
        bps = sorted(set(self.breakpoints) | {float(p) for p in points if math.isfinite(p)})
        cells = zip([-INF] + bps, bps + [INF])
        pieces = tuple(tuple(self.cell_piece(a, b).coef) for a, b in cells)
        return PiecewisePolynomial(tuple(bps), pieces, self.domain)

    def _combine(self, other: "PiecewisePolynomial", op) -> "PiecewisePolynomial":
        bps = sorted(set(self.breakpoints) | set(other.breakpoints))
        pieces = []
        for a, b in zip([-INF] + bps, bps + [INF]):
            pieces.append(tuple(op(self.cell_piece(a, b), other.cell_piece(a, b)).coef))
        return PiecewisePolynomial(tuple(bps), tuple(pieces), self.domain).simplify()

    def __add__(self, other):
        if not isinstance(other, PiecewisePolynomial):
            other = PiecewisePolynomial.constant(float(other))
        return self._combine(other, lambda p, q: p + q)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, PiecewisePolynomial):
            return self._combine(other, lambda p, q: p * q)
        s = float(other)
        return PiecewisePolynomial(
            self.breakpoints, tuple(tuple(s * c for c in p) for p in self.pieces), self.domain
        )

    __rmul__ = __mul__

    def simplify(self) -> "PiecewisePolynomial":
        """Drop breakpoints whose neighbouring pieces coincide."""
        pieces = [_trim(p) for p in self.pieces]
        bps = list(self.breakpoints)
        keep_b, keep_p = [], [pieces[0]]
        for b, p in zip(bps, pieces[1:]):
            if p == keep_p[-1]:
                continue
            keep_b.append(b)
            keep_p.append(p)
        return PiecewisePolynomial(tuple(keep_b), tuple(keep_p), self.domain)

    def compose_affine(self, c: float, s: float) -> "PiecewisePolynomial":
        """Return ``y -> f(c + s*y)`` for ``s != 0``."""
        if s == 0:
            raise InvalidInput("scale must be nonzero")
        lin = Polynomial([c, s])
        bps = [(b - c) / s for b in self.breakpoints]
        pieces = [tuple(self.piece(i)(lin).coef) for i in range(len(self.pieces))]
        if s < 0:
            bps, pieces = bps[::-1], pieces[::-1]
        return PiecewisePolynomial(tuple(bps), tuple(pieces))

    def integral(self, lo: float, hi: float) -> float:
        """Exact integral over ``[lo, hi]`` (finite limits)."""
        if hi <= lo:
            return 0.0
        return float(self.average(lo, hi)) * (hi - lo)

    def average(self, lo, hi) -> np.ndarray:
        """Mean value over ``[lo, hi]``, elementwise; the point value where ``lo == hi``.

        Gauss-Legendre on every polynomial cell, exact and free of the
        cancellation an antiderivative difference suffers on short intervals.
        """
        lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
        nodes, weights = np.polynomial.legendre.leggauss(max(self.degree, 0) // 2 + 1)
        edges = [-INF, *self.breakpoints, INF]
        total = np.zeros(lo.shape)
        for k, (a, b) in enumerate(zip(edges, edges[1:])):
            sa, sb = np.maximum(lo, a), np.minimum(hi, b)
            half = 0.5 * np.clip(sb - sa, 0.0, None)
            live = half > 0
            if not live.any():
                continue
            mid, h = 0.5 * (sa[live] + sb[live]), half[live]
            p = self.piece(k)
            total[live] += h * sum(w * p(mid + h * x) for x, w in zip(nodes, weights))
        width = hi - lo
        out = np.asarray(self(lo), dtype=float).copy().reshape(lo.shape)
        pos = width > 0
        out[pos] = total[pos] / width[pos]
        return out

    def antiderivative(self) -> "PiecewisePolynomial":
        """Continuous antiderivative vanishing at the first breakpoint (or 0)."""
        anti = [self.piece(i).integ() for i in range(len(self.pieces))]
        for i, b in enumerate(self.breakpoints):
            anti[i + 1] = anti[i + 1] + (anti[i](b) - anti[i + 1](b))
        ref = self.breakpoints[0] if self.breakpoints else 0.0
        shift = anti[0](ref)
        return PiecewisePolynomial(self.breakpoints, tuple(tuple((a - shift).coef) for a in anti),
                                   self.domain)

    def sup_on(self, lo: float, hi: float) -> float:
        """Supremum over ``[lo, hi]``, counting the closure of each piece."""
        if hi < lo:
            return -INF
        pts = [lo] + [b for b in self.breakpoints if lo < b < hi] + [hi]
        best = -INF
        for a, b in zip(pts, pts[1:]):
            coef = _trim(self.cell_piece(a, b).coef)
            p, deg = Polynomial(coef), len(coef) - 1
            if deg > 0 and ((math.isinf(b) and coef[-1] > 0)
                            or (math.isinf(a) and coef[-1] * (-1) ** deg > 0)):
                return INF
            cands = [v for v in (a, b) if math.isfinite(v)]
            if deg >= 2:
                cands += [r.real for r in p.deriv().roots()
                          if abs(r.imag) < 1e-12 and a < r.real < b]
            if not cands:
                cands = [0.0]
            best = max(best, max(float(p(v)) for v in cands))
        for v in pts:
            if math.isfinite(v):
                best = max(best, float(self(v)))
        return best


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HalfLine:
    """``{x >= t}`` for direction ``"ge"``, ``{x <= t}`` for ``"le"``."""

    threshold: float
    direction: str = "ge"
    dimension: int = 1

    def __post_init__(self):
        if self.direction not in ("ge", "le"):
            raise InvalidInput("direction must be 'ge' or 'le'")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return x >= self.threshold if self.direction == "ge" else x <= self.threshold

    def clip(self, lo: float, hi: float) -> tuple[float, float]:
        if self.direction == "ge":
            return max(lo, self.threshold), hi
        return lo, min(hi, self.threshold)

    def boundaries(self) -> tuple[float, ...]:
        return (self.threshold,)

    def indicator(self) -> PiecewisePolynomial:
        if self.direction == "ge":
            return PiecewisePolynomial((self.threshold,), ((0.0,), (1.0,)))
        return PiecewisePolynomial((self.threshold,), ((1.0,), (0.0,)))


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    dimension: int = 1

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInput("interval needs lo < hi")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.lo) & (x <= self.hi)

    def clip(self, lo: float, hi: float) -> tuple[float, float]:
        return max(lo, self.lo), min(hi, self.hi)

    def boundaries(self) -> tuple[float, ...]:
        return (self.lo, self.hi)

    def indicator(self) -> PiecewisePolynomial:
        return PiecewisePolynomial((self.lo, self.hi), ((0.0,), (1.0,), (0.0,)))


@dataclass(frozen=True)
class Halfspace:
    """``{x : normal @ x <= offset}`` (``"le"``) or ``>=`` (``"ge"``)."""

    normal: tuple[float, ...]
    offset: float
    direction: str = "le"

    def __post_init__(self):
        object.__setattr__(self, "normal", _floats(self.normal))
        if not any(self.normal):
            raise InvalidInput("halfspace normal must be nonzero")
        if self.direction not in ("ge", "le"):
            raise InvalidInput("direction must be 'ge' or 'le'")

    @property
    def dimension(self) -> int:
        return len(self.normal)

    def as_le(self) -> tuple[np.ndarray, float]:
        c = np.asarray(self.normal)
        return (c, self.offset) if self.direction == "le" else (-c, -self.offset)

    def contains(self, x):
        c, cbar = self.as_le()
        return np.asarray(x, dtype=float) @ c <= cbar

    def boundaries(self) -> tuple[float, ...]:
        if self.dimension != 1:
            raise InvalidInput("boundaries only defined in one dimension")
        c, cbar = self.as_le()
        return (cbar / c[0],)

    def clip(self, lo: float, hi: float) -> tuple[float, float]:
        return self.as_halfline().clip(lo, hi)

    def as_halfline(self) -> HalfLine:
        if self.dimension != 1:
            raise InvalidInput("not one-dimensional")
        c, cbar = self.as_le()
        return HalfLine(cbar / c[0], "le" if c[0] > 0 else "ge")

    def indicator(self) -> PiecewisePolynomial:
        return self.as_halfline().indicator()


@dataclass(frozen=True)
class FullSpace:
    dimension: int = 1

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape if self.dimension == 1 else x.shape[:-1]
        return np.ones(shape, dtype=bool)

    def clip(self, lo: float, hi: float) -> tuple[float, float]:
        return lo, hi

    def boundaries(self) -> tuple[float, ...]:
        return ()

    def indicator(self) -> PiecewisePolynomial:
        return PiecewisePolynomial.constant(1.0)


EventSet = Union[HalfLine, Interval, Halfspace, FullSpace]


# ---------------------------------------------------------------------------
# Multivariate monomials and piecewise-affine costs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MultiMonomial:
    exponents: tuple[int, ...]

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.prod(x ** np.asarray(self.exponents), axis=1)


MomentFunction = Union[PiecewisePolynomial, MultiMonomial]


@dataclass(frozen=True)
class AffineTerm:
    """``s(nu) @ x + t(nu)`` with ``s(nu) = slope + slope_nu @ nu`` and
    ``t(nu) = intercept + intercept_nu @ nu``."""

    slope: tuple[float, ...]
    intercept: float
    slope_nu: tuple[tuple[float, ...], ...] = ()
    intercept_nu: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "slope", _floats(self.slope))
        object.__setattr__(self, "slope_nu", tuple(_floats(r) for r in self.slope_nu))
        object.__setattr__(self, "intercept_nu", _floats(self.intercept_nu))

    def s(self, nu) -> np.ndarray:
        s = np.asarray(self.slope)
        if self.slope_nu:
            s = s + np.asarray(self.slope_nu) @ np.asarray(nu, dtype=float)
        return s

    def t(self, nu) -> float:
        t = self.intercept
        if self.intercept_nu:
            t += float(np.asarray(self.intercept_nu) @ np.asarray(nu, dtype=float))
        return t


@dataclass(frozen=True)
class PiecewiseAffineMax:
    terms: tuple[AffineTerm, ...]
    decision_dim: int
    uncertainty_dim: int

    def __post_init__(self):
        if not self.terms:
            raise InvalidInput("need at least one term")
        for term in self.terms:
            if len(term.slope) != self.uncertainty_dim:
                raise InvalidInput("slope length must equal uncertainty_dim")
            if self.decision_dim and len(term.intercept_nu) not in (0, self.decision_dim):
                raise InvalidInput("intercept_nu length must equal decision_dim")

    def __call__(self, nu, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = [x @ term.s(nu) + term.t(nu) for term in self.terms]
        return np.max(vals, axis=0)


# ---------------------------------------------------------------------------
# Structure, moments, dispersion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Unstructured:
    pass


@dataclass(frozen=True)
class Symmetric:
    center: float


@dataclass(frozen=True)
class SymmetricUnimodal:
    mode: float

    @property
    def center(self) -> float:
        return self.mode


StructuralClass = Union[Unstructured, Symmetric, SymmetricUnimodal]


@dataclass(frozen=True)
class MomentSpec:
    basis: tuple
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        object.__setattr__(self, "values", _floats(self.values))
        if len(self.basis) != len(self.values):
            raise InvalidInput("basis and values differ in length")
        if not self.basis or not _is_constant_one(self.basis[0]) or self.values[0] != 1.0:
            raise InvalidInput("index 0 must be the constant function with value 1")

    @classmethod
    def power(cls, values: Sequence[float]) -> "MomentSpec":
        """Power moments ``E[X^j] = values[j]``."""
        return cls(tuple(PiecewisePolynomial.monomial(j) for j in range(len(values))), values)

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def power_order(self) -> int | None:
        """``m`` when the basis is exactly ``1, x, ..., x^m``."""
        for j, h in enumerate(self.basis):
            if not (isinstance(h, PiecewisePolynomial) and h == PiecewisePolynomial.monomial(j)):
                return None
        return self.order


def _is_constant_one(h) -> bool:
    if isinstance(h, PiecewisePolynomial):
        return h.simplify() == PiecewisePolynomial.constant(1.0)
    if isinstance(h, MultiMonomial):
        return not any(h.exponents)
    return False


@dataclass(frozen=True)
class Variance:
    sigma: float


@dataclass(frozen=True)
class MAD:
    d: float
    lo: float
    hi: float


@dataclass(frozen=True)
class ConvexDispersion:
    func: PiecewisePolynomial
    level: float


@dataclass(frozen=True)
class CovarianceUB:
    matrix: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "matrix", tuple(_floats(r) for r in self.matrix))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.matrix)


@dataclass(frozen=True)
class ComponentwiseMAD:
    """``E|a_k @ (X - center)| <= bounds[k]`` for each row ``a_k`` of
    ``directions``; componentwise rows are unit vectors, pairwise rows are
    ``e_i + e_j`` and ``e_i - e_j``."""

    center: tuple[float, ...]
    directions: tuple[tuple[float, ...], ...]
    bounds: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "center", _floats(self.center))
        object.__setattr__(self, "directions", tuple(_floats(r) for r in self.directions))
        object.__setattr__(self, "bounds", _floats(self.bounds))
        if len(self.directions) != len(self.bounds):
            raise InvalidInput("one bound per direction required")


Dispersion = Union[Variance, MAD, ConvexDispersion, CovarianceUB, ComponentwiseMAD, None]


@dataclass(frozen=True)
class MomentRow:
    func: PiecewisePolynomial
    value: float
    sense: str = "eq"


@dataclass(frozen=True)
class AmbiguitySpec:
    moments: MomentSpec
    dispersion: Dispersion = None
    structure: StructuralClass = field(default_factory=Unstructured)
    support: tuple[tuple[float, float], ...] = ((-INF, INF),)

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(_floats(s) for s in self.support))
        d = self.dispersion
        if isinstance(d, Variance) and not d.sigma > 0:
            raise InvalidInput("sigma must be positive")
        if isinstance(d, MAD):
            if not d.d > 0:
                raise InvalidInput("MAD must be positive")
            if not d.lo < d.hi:
                raise InvalidInput("MAD support needs lo < hi")

    @property
    def dimension(self) -> int:
        return len(self.support)

    @property
    def support_interval(self) -> tuple[float, float]:
        lo, hi = self.support[0]
        if isinstance(self.dispersion, MAD):
            lo, hi = max(lo, self.dispersion.lo), min(hi, self.dispersion.hi)
        return lo, hi

    @property
    def mean(self):
        vals = {}
        for h, q in zip(self.moments.basis, self.moments.values):
            if isinstance(h, PiecewisePolynomial) and h == PiecewisePolynomial.identity():
                return q
            if isinstance(h, MultiMonomial) and sum(h.exponents) == 1:
                vals[h.exponents.index(1)] = q
        if vals and len(vals) == self.dimension:
            return np.array([vals[i] for i in range(self.dimension)])
        return None

    def rows(self) -> tuple[MomentRow, ...]:
        """Univariate moment rows: the basis, then the dispersion row."""
        out = []
        for h, q in zip(self.moments.basis, self.moments.values):
            if not isinstance(h, PiecewisePolynomial):
                raise InvalidInput("rows() is univariate only")
            out.append(MomentRow(h, q))
        d = self.dispersion
        mu = self.mean
        if isinstance(d, Variance):
            sq = PiecewisePolynomial.monomial(2)
            if not any(r.func == sq for r in out):
                out.append(MomentRow(sq, mu * mu + d.sigma ** 2))
        elif isinstance(d, MAD):
            out.append(MomentRow(PiecewisePolynomial.abs_dev(mu), d.d))
        elif isinstance(d, ConvexDispersion):
            out.append(MomentRow(d.func, d.level))
        elif d is not None:
            raise InvalidInput("multivariate dispersion has no univariate rows")
        return tuple(out)


def mean_variance_spec(mu: float, sigma: float,
                       support: tuple[float, float] = (-INF, INF),
                       structure: StructuralClass | None = None) -> AmbiguitySpec:
    return AmbiguitySpec(MomentSpec.power([1.0, mu]), Variance(sigma),
                         structure or Unstructured(), (support,))


# ---------------------------------------------------------------------------
# Explicit distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dirac:
    point: float
    asymptotic: bool = False

    @property
    def location(self) -> float:
        return self.point - eps_atom(self.point) if self.asymptotic else self.point

    def atoms(self, limit: bool = False):
        return [(self.point if limit else self.location, 1.0)]


@dataclass(frozen=True)
class SymmetricDiracPair:
    center: float
    offset: float
    asymptotic: bool = False

    def atoms(self, limit: bool = False):
        off = self.offset
        if self.asymptotic and not limit:
            off += eps_atom(self.center - self.offset)
        return [(self.center - off, 0.5), (self.center + off, 0.5)]


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInput("uniform component needs lo < hi")


Component = Union[Dirac, SymmetricDiracPair, UniformInterval]


def _component_integral(comp, f: PiecewisePolynomial, event, limit: bool) -> tuple[float, float]:
    """Return ``(E[f 1_event], P(event))`` for one component."""
    if isinstance(comp, UniformInterval):
        lo, hi = event.clip(comp.lo, comp.hi) if event is not None else (comp.lo, comp.hi)
        if hi <= lo:
            return 0.0, 0.0
        width = comp.hi - comp.lo
        return f.integral(lo, hi) / width, (hi - lo) / width
    num = den = 0.0
    for x, w in comp.atoms(limit):
        inside = True if event is None else bool(event.contains(x))
        if inside:
            num += w * float(f(x))
            den += w
    return num, den


@dataclass(frozen=True)
class ExplicitDistribution:
    components: tuple[tuple[float, Component], ...]

    def __post_init__(self):
        comps = tuple((float(w), c) for w, c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise InvalidInput("distribution needs at least one component")
        if any(w <= 0 for w, _ in comps):
            raise InvalidInput("weights must be positive")
        if abs(sum(w for w, _ in comps) - 1.0) > WEIGHT_TOL:
            raise InvalidInput("weights must sum to one")

    @classmethod
    def from_weights(cls, weights: Sequence[float], comps: Sequence[Component]) -> "ExplicitDistribution":
        w = np.asarray(weights, dtype=float)
        keep = w > 0
        w = w[keep] / w[keep].sum()
        return cls(tuple(zip(w.tolist(), [c for c, k in zip(comps, keep) if k])))

    @classmethod
    def atoms_of(cls, points: Sequence[float], weights: Sequence[float]) -> "ExplicitDistribution":
        return cls.from_weights(weights, [Dirac(float(x)) for x in points])

    def expect(self, f: PiecewisePolynomial, event=None, limit: bool = False) -> float:
        return sum(w * _component_integral(c, f, event, limit)[0] for w, c in self.components)

    def mass(self, event, limit: bool = False) -> float:
        one = PiecewisePolynomial.constant(1.0)
        return sum(w * _component_integral(c, one, event, limit)[1] for w, c in self.components)

    def support_points(self, limit: bool = False) -> list[float]:
        pts = []
        for _, c in self.components:
            if isinstance(c, UniformInterval):
                pts += [c.lo, c.hi]
            else:
                pts += [x for x, _ in c.atoms(limit)]
        return pts


def conditional_expectation(dist: ExplicitDistribution, g: PiecewisePolynomial, event) -> float:
    """``E[g(X) | X in event]`` computed exactly."""
    num = den = 0.0
    for w, comp in dist.components:
        a, b = _component_integral(comp, g, event, limit=False)
        num += w * a
        den += w * b
    if den <= 0.0:
        raise ZeroEventMass("distribution assigns zero mass to the event")
    return num / den


# ---------------------------------------------------------------------------
# Bound results
# ---------------------------------------------------------------------------

class Status(str, enum.Enum):
    TIGHT = "tight"
    DIVERGENT = "divergent"
    UNINFORMATIVE = "uninformative"
    INFEASIBLE = "infeasible"
    NO_FEASIBLE_TANGENT = "no_feasible_tangent"
    NUMERICAL_TROUBLE = "numerical_trouble"


@dataclass(frozen=True)
class BoundResult:
    value: float
    status: Status
    dual_certificate: tuple[float, ...] | None = None
    extremal: ExplicitDistribution | None = None
    gap: float | None = None
    robust_value: float | None = None
    event_mass: float | None = None
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "status", Status(self.status))
        if self.dual_certificate is not None:
            object.__setattr__(self, "dual_certificate", _floats(self.dual_certificate))
        if self.status is Status.DIVERGENT and self.value != INF:
            raise InvalidInput("divergent results carry value inf")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def divergent(**kw) -> BoundResult:
    return BoundResult(INF, Status.DIVERGENT, **kw)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple[str, ...] = ()


def shifted_power_moments(q: Sequence[float], c: float, s: float) -> np.ndarray:
    """Moments of ``(X - c)/s`` from power moments of ``X``."""
    q = np.asarray(q, dtype=float)
    return shift_matrix(len(q) - 1, c, s) @ q


def shift_matrix(m: int, c: float, s: float) -> np.ndarray:
    """Matrix ``T`` with ``((x - c)/s)^j = sum_k T[j, k] x^k``."""
    T = np.zeros((m + 1, m + 1))
    for j in range(m + 1):
        for k in range(j + 1):
            T[j, k] = math.comb(j, k) * (-c) ** (j - k) / s ** j
    return T


def _hankel_min_eig(mom: np.ndarray, shift: Polynomial | None = None) -> float:
    """Smallest eigenvalue of the (localizing) Hankel matrix."""
    if shift is None:
        seq = mom
    else:
        n = len(mom) - (len(shift.coef) - 1)
        seq = np.array([sum(cf * mom[i + k] for k, cf in enumerate(shift.coef)) for i in range(n)])
    k = (len(seq) - 1) // 2
    if k < 0:
        return INF
    H = np.array([[seq[i + j] for j in range(k + 1)] for i in range(k + 1)])
    return float(np.linalg.eigvalsh(H)[0])


def validate(spec: AmbiguitySpec) -> ValidationReport:
    """Check strict feasibility of the moment information."""
    bad: list[str] = []
    mu = spec.mean
    d = spec.dispersion
    if spec.dimension == 1:
        lo, hi = spec.support_interval
        if mu is None:
            bad.append("mean not specified")
        elif not lo < mu < hi:
            bad.append("mean not strictly inside support")
        if isinstance(d, Variance) and not d.sigma > 0:
            bad.append("variance not strictly positive")
        if isinstance(d, MAD) and mu is not None and d.lo < mu < d.hi:
            cap = 2 * (mu - d.lo) * (d.hi - mu) / (d.hi - d.lo)
            if d.d >= cap:
                bad.append("MAD exceeds maximal MAD on support")
            if d.d <= 0:
                bad.append("MAD not strictly positive")
        if isinstance(d, ConvexDispersion) and mu is not None:
            if not d.level > float(d.func(mu)):
                bad.append("dispersion level not above dispersion at the mean")
        m = spec.moments.power_order()
        if m is not None and m >= 2 and mu is not None:
            var = spec.moments.values[2] - mu * mu
            if var <= 0:
                bad.append("variance not strictly positive")
            else:
                bad += _moment_interior(spec.moments.values, mu, math.sqrt(var), lo, hi)
        if isinstance(spec.structure, (Symmetric, SymmetricUnimodal)) and mu is not None:
            c = spec.structure.center
            if abs(c - mu) > FEAS_TOL * max(1.0, abs(mu)):
                bad.append("structure center differs from mean")
            if m is not None:
                var = spec.moments.values[2] - mu * mu if m >= 2 else 1.0
                z = shifted_power_moments(spec.moments.values, mu, math.sqrt(max(var, 1e-300)))
                if any(abs(z[j]) > 1e-8 * max(1.0, abs(z[j - 1])) for j in range(3, m + 1, 2)):
                    bad.append("odd central moments nonzero under symmetry")
    else:
        if isinstance(d, CovarianceUB):
            S = d.array
            if not np.allclose(S, S.T):
                bad.append("covariance bound not symmetric")
            elif np.linalg.eigvalsh(S)[0] <= 0:
                bad.append("covariance bound not positive definite")
        if isinstance(d, ComponentwiseMAD) and min(d.bounds) <= 0:
            bad.append("deviation bounds not strictly positive")
    return ValidationReport(not bad, tuple(bad))


def _moment_interior(q, mu, s, lo, hi) -> list[str]:
    z = shifted_power_moments(q, mu, s)
    a = (lo - mu) / s
    b = (hi - mu) / s
    scale = max(1.0, float(np.max(np.abs(z))))
    tol = 1e-10 * scale
    checks = [_hankel_min_eig(z)]
    if math.isfinite(a) and math.isfinite(b):
        checks.append(_hankel_min_eig(z, Polynomial([-a, 1.0]) * Polynomial([b, -1.0])))
        checks.append(_hankel_min_eig(z, Polynomial([-a, 1.0])))
        checks.append(_hankel_min_eig(z, Polynomial([b, -1.0])))
    elif math.isfinite(a):
        checks.append(_hankel_min_eig(z, Polynomial([-a, 1.0])))
    elif math.isfinite(b):
        checks.append(_hankel_min_eig(z, Polynomial([b, -1.0])))
    if min(checks) <= tol:
        return ["moments not in the interior of the moment cone of the support"]
    return []


# ---------------------------------------------------------------------------
# Certificate checking
# ---------------------------------------------------------------------------

def dual_function(lam: Sequence[float], funcs: Sequence[PiecewisePolynomial],
                  g: PiecewisePolynomial, event) -> PiecewisePolynomial:
    """``sum_j lam_j h_j + (lam_last - g) * 1_event``."""
    out = PiecewisePolynomial.constant(0.0)
    for l, h in zip(lam[:-1], funcs):
        out = out + float(l) * h
    ind = event.indicator()
    return out + (PiecewisePolynomial.constant(float(lam[-1])) - g) * ind


def dual_slack(lam: Sequence[float], funcs: Sequence[PiecewisePolynomial],
               values: Sequence[float], g: PiecewisePolynomial, event,
               structure: StructuralClass, xs) -> tuple[float, np.ndarray]:
    """Moment-row value ``sum_j lam_j q_j`` (must be <= 0) and the slack of the
    semi-infinite constraint on ``xs`` (must be >= 0).

    For symmetric classes ``xs`` are offsets ``>= 0`` from the center and the
    slack is the constraint averaged over the generating distribution.
    """
    lam = np.asarray(lam, dtype=float)
    row = float(lam[:-1] @ np.asarray(values, dtype=float))
    F = dual_function(lam, funcs, g, event)
    xs = np.asarray(xs, dtype=float)
    if isinstance(structure, Symmetric):
        c = structure.center
        return row, 0.5 * (F(c - xs) + F(c + xs))
    if isinstance(structure, SymmetricUnimodal):
        c = structure.center
        return row, F.average(c - np.abs(xs), c + np.abs(xs))
    return row, F(xs)
