"""Primal verification on discretised supports.

The conditional problem is linear-fractional in the distribution.  After the
change of measure ``q = alpha * P`` with ``alpha = 1 / P(event)`` it becomes
the LP

    max  sum_i g_i e_i q_i
    s.t. sum_i h_j(x_i) q_i = alpha * m_j      (all moment rows)
         sum_i e_i q_i      = 1
         q, alpha >= 0

over the weights ``q_i`` of a finite family of generators (atoms, symmetric
pairs or Dirac-plus-uniform mixtures).  Its optimum is a lower bound on the
semi-infinite value, and its LP dual is a feasible-on-the-grid certificate in
the same layout as the conic route: ``(lam_0, ..., lam_m, tau)``.

Everything here goes through ``scipy.optimize.linprog`` so that it stays
independent of the conic backend used by :mod:`condbound.sos`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import (BracketInvalid, EventMassVanishes, InfeasibleDiscretization,
                     InvalidInput, SolverFailure, TooManyAtoms, UnsupportedEvent)
from .model import (INF, AmbiguitySpec, BoundResult, ComponentwiseMAD, CovarianceUB,
                    Dirac, ExplicitDistribution, FullSpace, Halfspace, HalfLine, Interval,
                    MomentRow, PiecewiseAffineMax, PiecewisePolynomial, Status, Symmetric,
                    SymmetricDiracPair, SymmetricUnimodal, UniformInterval, eps_atom,
                    shift_matrix)

PP = PiecewisePolynomial
EPS_MASS = 1e-9
ETA_REL = 1e-7
WEIGHT_TOL = 1e-10


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atoms:
    pass


@dataclass(frozen=True)
class SymmetricPairs:
    center: float


@dataclass(frozen=True)
class DiracPlusUniforms:
    center: float


Generator = Union[Atoms, SymmetricPairs, DiracPlusUniforms]


@dataclass(frozen=True)
class GridSpec:
    """One-dimensional grid; ``num_points`` of ``2**k + 1`` make doubling nested.

    ``spacing='log'`` spaces points geometrically away from the midpoint.
    Event boundaries ``b`` are added together with ``b - eps`` unless
    ``boundary_eps`` is off.
    """

    lo: float
    hi: float
    num_points: int
    spacing: str = "linear"
    generator: Generator = field(default_factory=Atoms)
    forced: tuple[float, ...] = ()
    boundary_eps: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise InvalidInput("grid needs finite lo < hi")
        if self.num_points < 3:
            raise InvalidInput("grid needs at least three points")
        if self.spacing not in ("linear", "log"):
            raise InvalidInput(f"unknown spacing {self.spacing!r}")
        object.__setattr__(self, "forced", tuple(float(x) for x in self.forced))

    def base_points(self) -> np.ndarray:
        if self.spacing == "linear":
            return np.linspace(self.lo, self.hi, self.num_points)
        c, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        r = np.geomspace(half * 1e-6, half, max(1, (self.num_points - 1) // 2))
        return np.concatenate([c - r[::-1], [c], c + r])

    def points(self, boundaries: Sequence[float] = (), support=(-INF, INF)) -> np.ndarray:
        extra = list(self.forced)
        for b in boundaries:
            extra += [b, b - eps_atom(b)] if self.boundary_eps else [b]
        pts = np.concatenate([self.base_points(), np.asarray(extra, dtype=float)])
        lo, hi = max(self.lo, support[0]), min(self.hi, support[1])
        for s in support:
            if lo <= s <= hi:
                pts = np.append(pts, s)
        pts = pts[(pts >= lo) & (pts <= hi)]
        return np.unique(pts)

    def refined(self) -> "GridSpec":
        return replace(self, num_points=2 * self.num_points - 1)

    def widened(self, support=(-INF, INF)) -> "GridSpec":
        """Double the span about the midpoint at unchanged spacing."""
        c, half = 0.5 * (self.lo + self.hi), 0.5 * (self.hi - self.lo)
        lo, hi = max(c - 2 * half, support[0]), min(c + 2 * half, support[1])
        return replace(self, lo=lo, hi=hi, num_points=2 * self.num_points - 1)

    def at_edge(self, xs: Sequence[float], support=(-INF, INF)) -> bool:
        """True if some point sits on a grid end that is not a support end."""
        h = (self.hi - self.lo) / (self.num_points - 1)
        xs = np.asarray(xs, dtype=float)
        return bool((self.lo > support[0] and np.any(xs <= self.lo + h))
                    or (self.hi < support[1] and np.any(xs >= self.hi - h)))


def default_grid(spec: AmbiguitySpec, num_points: int = 2 ** 13 + 1, width: float = 10.0,
                 forced: Sequence[float] = ()) -> GridSpec:
    """Grid covering ``mean +- width * spread`` clipped to the support."""
    mu, s = _location_scale(spec)
    lo, hi = spec.support_interval
    lo, hi = max(lo, mu - width * s), min(hi, mu + width * s)
    gen: Generator = Atoms()
    if isinstance(spec.structure, Symmetric):
        gen = SymmetricPairs(spec.structure.center)
    elif isinstance(spec.structure, SymmetricUnimodal):
        gen = DiracPlusUniforms(spec.structure.center)
    return GridSpec(lo, hi, num_points, generator=gen, forced=tuple(forced))


def _location_scale(spec: AmbiguitySpec) -> tuple[float, float]:
    rows = spec.rows()
    mu = spec.mean
    if mu is None:
        raise InvalidInput("mean required")
    sq = PP.monomial(2)
    for r in rows:
        if r.func == sq:
            return mu, math.sqrt(max(r.value - mu * mu, 0.0)) or 1.0
    lo, hi = spec.support_interval
    if math.isfinite(lo) and math.isfinite(hi):
        return mu, 0.5 * (hi - lo)
    for r in rows[2:]:
        return mu, max(abs(r.value), 1e-12)
    return mu, 1.0


# ---------------------------------------------------------------------------
# generator tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Table:
    comps: list
    H: np.ndarray        # rows x generators, standardised moment rows
    values: np.ndarray
    senses: tuple[str, ...]
    e: np.ndarray        # event mass per generator
    ge: np.ndarray       # E[g 1_event] per generator
    back: np.ndarray     # standardised multipliers -> original ones
    order: int


def _rows(spec: AmbiguitySpec) -> tuple[int, list[MomentRow]]:
    rows = list(spec.rows())
    m = 0
    while m + 1 < len(rows) and rows[m + 1].func == PP.monomial(m + 1):
        m += 1
    return m, rows


def _generator_values(f: PiecewisePolynomial, gen: Generator, xs: np.ndarray) -> np.ndarray:
    """Expectation of ``f`` under every generator indexed by ``xs``."""
    if isinstance(gen, Atoms):
        return np.asarray(f(xs), dtype=float)
    c = gen.center
    r = np.abs(xs - c)
    if isinstance(gen, SymmetricPairs):
        return 0.5 * (np.asarray(f(c - r), dtype=float) + np.asarray(f(c + r), dtype=float))
    return f.average(c - r, c + r)


def _generators(grid: GridSpec, boundaries, support) -> tuple[np.ndarray, list]:
    """Generator parameters (points or offsets encoded as points right of the center)."""
    gen = grid.generator
    pts = grid.points(boundaries, support)
    if isinstance(gen, Atoms):
        return pts, [Dirac(float(x)) for x in pts]
    c = gen.center
    offs = [abs(x - c) for x in pts]
    for b in boundaries:
        d = abs(b - c)
        offs += [d, d + eps_atom(b), max(d - eps_atom(b), 0.0)] if grid.boundary_eps else [d]
    offs = np.unique(np.asarray(offs))
    lo, hi = support
    offs = offs[(c - offs >= lo) & (c + offs <= hi)]
    if isinstance(gen, SymmetricPairs):
        comps = [SymmetricDiracPair(c, float(r)) if r > 0 else Dirac(c) for r in offs]
    else:
        comps = [UniformInterval(c - float(r), c + float(r)) if r > 0 else Dirac(c) for r in offs]
    return c + offs, comps


def _table(spec: AmbiguitySpec, event, g: PiecewisePolynomial, grid: GridSpec) -> _Table:
    if spec.dimension != 1:
        raise UnsupportedEvent("univariate oracle; use primal_lp_bivariate")
    if isinstance(event, Halfspace):
        event = event.as_halfline()
    if not isinstance(event, (HalfLine, Interval, FullSpace)):
        raise UnsupportedEvent(f"unsupported event {type(event).__name__}")
    m, rows = _rows(spec)
    c0, s0 = _location_scale(spec)
    # event ends plus the kinks and jumps of the objective and of every row
    kinks = {b for f in [g] + [r.func for r in rows] for b in f.breakpoints}
    bounds = tuple(sorted(set(event.boundaries()) | kinks))
    xs, comps = _generators(grid, bounds, spec.support_interval)
    gen = grid.generator
    # power rows in the standardised variable y = (x - c0)/s0
    T = shift_matrix(m, c0, s0)
    ys = (xs - c0) / s0
    if isinstance(gen, Atoms):
        P = np.vstack([ys ** j for j in range(m + 1)])
    else:
        cy = (gen.center - c0) / s0
        pp = [PP.monomial(j) for j in range(m + 1)]
        ygen = SymmetricPairs(cy) if isinstance(gen, SymmetricPairs) else DiracPlusUniforms(cy)
        P = np.vstack([_generator_values(p, ygen, ys) for p in pp])
    vals = T @ np.array([r.value for r in rows[:m + 1]])
    H = [P]
    values = list(vals)
    scales = []
    for r in rows[m + 1:]:
        k = max(abs(r.value), 1e-300)
        H.append(_generator_values(r.func, gen, xs)[None, :] / k)
        values.append(r.value / k)
        scales.append(k)
    ind = event.indicator()
    e = _generator_values(ind, gen, xs)
    ge = _generator_values(g * ind, gen, xs)
    n = m + 1 + len(scales)
    back = np.zeros((n, n))
    back[:m + 1, :m + 1] = T.T
    for i, k in enumerate(scales):
        back[m + 1 + i, m + 1 + i] = 1.0 / k
    senses = ("eq",) * (m + 1) + tuple(r.sense for r in rows[m + 1:])
    return _Table(comps, np.vstack(H), np.asarray(values), senses, e, ge, back, m)


# ---------------------------------------------------------------------------
# the LP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LPSolution:
    """Raw oracle LP outcome; ``weights`` are unconditional probabilities."""

    value: float
    alpha: float
    components: tuple
    weights: np.ndarray
    certificate: tuple[float, ...]
    eta: float
    order: int
    num_rows: int
    table: _Table = field(repr=False)

    @property
    def event_mass(self) -> float:
        return 1.0 / self.alpha


def _solve_table(tab: _Table, eta: float, perturb: np.ndarray | None = None):
    n = tab.H.shape[1]
    k = tab.H.shape[0]
    c = np.concatenate([-tab.ge, [0.0]])
    if perturb is not None:
        c[:n] -= perturb
    eq_rows, eq_rhs, ub_rows, ub_rhs = [], [], [], []
    for j in range(k):
        row = np.concatenate([tab.H[j], [-tab.values[j]]])
        if tab.senses[j] == "le":
            ub_rows.append(row)
            ub_rhs.append(0.0)
        elif eta > 0:
            tol = np.zeros(n + 1)
            tol[n] = eta * max(1.0, abs(tab.values[j]))
            ub_rows += [row - tol, -row - tol]
            ub_rhs += [0.0, 0.0]
        else:
            eq_rows.append(row)
            eq_rhs.append(0.0)
    eq_rows.append(np.concatenate([tab.e, [0.0]]))
    eq_rhs.append(1.0)
    A_eq = sparse.csr_matrix(np.vstack(eq_rows))
    A_ub = sparse.csr_matrix(np.vstack(ub_rows)) if ub_rows else None
    res = linprog(c, A_ub=A_ub, b_ub=ub_rhs if ub_rows else None, A_eq=A_eq, b_eq=eq_rhs,
                  bounds=(0, None), method="highs-ds")
    return res


def _certificate(tab: _Table, res, eta: float) -> tuple[float, ...]:
    """Multipliers ``(lam..., tau)`` in original coordinates from the LP duals."""
    k = tab.H.shape[0]
    eq = -np.asarray(res.eqlin.marginals)
    ub = -np.asarray(res.ineqlin.marginals) if res.ineqlin is not None and len(res.ineqlin.marginals) else np.zeros(0)
    lam = np.zeros(k)
    ie = iu = 0
    for j in range(k):
        if tab.senses[j] == "le":
            lam[j] = -ub[iu]
            iu += 1
        elif eta > 0:
            lam[j] = -(ub[iu] - ub[iu + 1])
            iu += 2
        else:
            lam[j] = eq[ie]
            ie += 1
    tau = eq[ie]
    return tuple(tab.back @ lam) + (float(tau),)


def solve_lp(spec: AmbiguitySpec, event, g: PiecewisePolynomial, grid: GridSpec,
             perturb: float = 0.0, seed: int = 0) -> LPSolution:
    """Solve the discretised Charnes-Cooper LP, relaxing moment rows if needed."""
    tab = _table(spec, event, g, grid)
    if not np.any(tab.e > 0):
        raise InfeasibleDiscretization("no grid point lies in the event")
    pert = None
    if perturb > 0:
        pert = perturb * np.random.default_rng(seed).random(tab.H.shape[1])
    eta = 0.0
    res = _solve_table(tab, eta, pert)
    if res.status == 2:
        # exact moments are generally unattainable on a finite grid
        eta = ETA_REL
        res = _solve_table(tab, eta, pert)
    if res.status == 2:
        raise InfeasibleDiscretization("moment system unsatisfiable on this grid")
    if res.status == 3:
        raise EventMassVanishes("LP unbounded: event mass can vanish on this grid")
    if res.status != 0:
        raise SolverFailure(f"oracle LP failed: {res.message}")
    n = tab.H.shape[1]
    q, alpha = res.x[:n], float(res.x[n])
    if alpha > 1.0 / EPS_MASS:
        raise EventMassVanishes(f"worst-case event mass {1 / alpha:.3g} below {EPS_MASS:g}")
    if alpha <= 0:
        raise InfeasibleDiscretization("zero scaling in the oracle LP")
    value = float(tab.ge @ q)
    return LPSolution(value, alpha, tuple(tab.comps), q / alpha,
                      _certificate(tab, res, eta), eta, tab.order,
                      sum(s != "le" for s in tab.senses) + 1, tab)


def extract_support(sol: LPSolution, tol: float = WEIGHT_TOL) -> ExplicitDistribution:
    """Basic distribution of a vertex solution; at most ``rows + 1`` components."""
    keep = np.flatnonzero(sol.weights > tol)
    limit = sol.table.H.shape[0] + 1
    if len(keep) > limit:
        raise TooManyAtoms(f"{len(keep)} components exceed the {limit} LP rows")
    return ExplicitDistribution.from_weights(sol.weights[keep], [sol.components[i] for i in keep])


def primal_lp(spec: AmbiguitySpec, event, g: PiecewisePolynomial, grid: GridSpec) -> BoundResult:
    """Oracle lower bound with the recovered worst-case distribution.

    ``extremal`` is the unconditional distribution ``q / alpha``; its event
    mass is ``1 / alpha``.
    """
    sol = solve_lp(spec, event, g, grid)
    notes = [f"grid size {len(sol.components)}"]
    if sol.eta:
        notes.append(f"moment rows relaxed by {sol.eta:g}")
    try:
        dist = extract_support(sol)
    except TooManyAtoms:
        # interior optimum; nudge the objective to land on a vertex
        sol2 = solve_lp(spec, event, g, grid, perturb=1e-12 * max(1.0, abs(sol.value)))
        dist = extract_support(sol2)
        notes.append("vertex cleanup by objective perturbation")
    return BoundResult(sol.value, Status.TIGHT, sol.certificate, dist, None, None,
                       sol.event_mass, tuple(notes))


def primal_lp_structured(spec: AmbiguitySpec, event, g: PiecewisePolynomial,
                         grid: GridSpec) -> BoundResult:
    """Same LP over symmetric-pair or Dirac-plus-uniform generators."""
    if isinstance(grid.generator, Atoms):
        raise InvalidInput("structured oracle needs SymmetricPairs or DiracPlusUniforms")
    return primal_lp(spec, event, g, grid)


# ---------------------------------------------------------------------------
# parametric reformulation
# ---------------------------------------------------------------------------

def lp_inner(grid: GridSpec) -> Callable:
    """``sup E[(g - tau) 1_event]`` on a grid, for :func:`dinkelbach_bisection`."""

    def inner(spec, event, g, tau):
        tab = _table(spec, event, g, grid)
        k, n = tab.H.shape
        A = np.vstack([tab.H[j] for j in range(k) if tab.senses[j] == "eq"])
        b = np.array([tab.values[j] for j in range(k) if tab.senses[j] == "eq"])
        ub = [j for j in range(k) if tab.senses[j] == "le"]
        res = linprog(-(tab.ge - tau * tab.e),
                      A_ub=tab.H[ub] if ub else None,
                      b_ub=tab.values[ub] if ub else None,
                      A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        if res.status != 0:
            raise SolverFailure(f"inner LP failed: {res.message}")
        return -res.fun

    return inner


def dinkelbach_bisection(spec, event, g: PiecewisePolynomial, inner_solver: Callable,
                         tau_lo: float | None = None, tau_hi: float | None = None,
                         tol: float = 1e-6, max_doublings: int = 60) -> float:
    """Root of ``phi(tau) = sup E[(g - tau) 1_event]`` by bisection.

    ``inner_solver(spec, event, g, tau)`` evaluates ``phi``.  Missing bracket
    ends are searched for by doubling away from zero.
    """

    def phi(tau):
        return inner_solver(spec, event, g, tau)

    def spread(x):
        return max(1.0, abs(x))

    if tau_lo is None:
        tau_lo = -1.0
        while phi(tau_lo) <= 0:
            tau_lo = -2 * spread(tau_lo)
            max_doublings -= 1
            if max_doublings < 0:
                raise BracketInvalid("no tau with phi(tau) > 0 found")
    if tau_hi is None:
        tau_hi = max(1.0, tau_lo + 1.0)
        while phi(tau_hi) > 0:
            tau_hi = tau_hi + 2 * spread(tau_hi - tau_lo)
            max_doublings -= 1
            if max_doublings < 0:
                raise BracketInvalid("phi stays positive; the bound may diverge")
    if not tau_lo < tau_hi:
        raise BracketInvalid("need tau_lo < tau_hi")
    if not phi(tau_lo) > 0:
        raise BracketInvalid("phi(tau_lo) must be positive")
    if phi(tau_hi) > 0:
        raise BracketInvalid("phi(tau_hi) must be nonpositive")
    lo, hi = tau_lo, tau_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if phi(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# refinement driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Refinement:
    result: BoundResult
    closed: bool
    history: tuple[tuple[int, float], ...]
    grid: GridSpec


def refine_until(spec: AmbiguitySpec, event, g: PiecewisePolynomial, target_gap: float,
                 reference: float, grid: GridSpec | None = None,
                 max_points: int = 2 ** 20 + 1) -> Refinement:
    """Double the grid until ``reference - primal <= target_gap`` or the cap.

    The span doubles instead of the density while the best solution puts mass
    on a truncated grid end, since such a supremum is only approached by mass
    escaping to infinity. An unclosed gap is reported, not raised: it points
    at divergence or a suboptimal dual.
    """
    if not math.isfinite(reference):
        raise InvalidInput("reference value must be finite")
    grid = grid or default_grid(spec, 2 ** 10 + 1)
    history = []
    best = None
    while True:
        res = primal_lp(spec, event, g, grid)
        history.append((grid.num_points, res.value))
        if best is None or res.value > best.value:
            best = res
        gap = reference - best.value
        if gap <= target_gap:
            out = BoundResult(best.value, best.status, best.dual_certificate, best.extremal,
                              gap, None, best.event_mass, best.diagnostics)
            return Refinement(out, True, tuple(history), grid)
        if grid.num_points * 2 - 1 > max_points:
            out = BoundResult(best.value, best.status, best.dual_certificate, best.extremal,
                              gap, None, best.event_mass,
                              best.diagnostics + (f"gap {gap:.3g} not closed at {grid.num_points} points",))
            return Refinement(out, False, tuple(history), grid)
        pts = res.extremal.support_points(limit=True) if res.extremal is not None else ()
        support = spec.support_interval
        grid = grid.widened(support) if grid.at_edge(pts, support) else grid.refined()


# ---------------------------------------------------------------------------
# bivariate grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid2D:
    x: GridSpec
    y: GridSpec


def bivariate_moment_rows(spec: AmbiguitySpec) -> tuple[list[Callable], list[float], list[str]]:
    """Row functions on ``(n, 2)`` point arrays with their values and senses.

    A covariance bound is imposed with equality (the LP cannot carry the PSD
    ordering), which only shrinks the oracle's feasible set.
    """
    mu = spec.mean
    if mu is None or len(mu) != 2:
        raise InvalidInput("bivariate spec with a mean vector required")
    funcs = [lambda P: np.ones(len(P)), lambda P: P[:, 0], lambda P: P[:, 1]]
    values = [1.0, float(mu[0]), float(mu[1])]
    senses = ["eq"] * 3
    d = spec.dispersion
    if isinstance(d, CovarianceUB):
        S = d.array
        for i, j in ((0, 0), (1, 1), (0, 1)):
            funcs.append(lambda P, i=i, j=j: (P[:, i] - mu[i]) * (P[:, j] - mu[j]))
            values.append(float(S[i, j]))
            senses.append("eq")
    elif isinstance(d, ComponentwiseMAD):
        ctr = np.asarray(d.center)
        for a, f in zip(d.directions, d.bounds):
            a = np.asarray(a)
            funcs.append(lambda P, a=a: np.abs((P - ctr) @ a))
            values.append(float(f))
            senses.append("le")
    else:
        raise InvalidInput("bivariate oracle needs CovarianceUB or ComponentwiseMAD")
    return funcs, values, senses


def primal_lp_bivariate(spec: AmbiguitySpec, event, cost: PiecewiseAffineMax,
                        decision: Sequence[float], grid: Grid2D) -> BoundResult:
    """Tensor-grid LP for ``sup E[cost(decision, X) | X in event]``."""
    funcs, values, senses = bivariate_moment_rows(spec)
    bx = by = ()
    if isinstance(event, Halfspace):
        a, b = event.as_le()
        if a[0] == 0 and a[1] != 0:
            by = (b / a[1],)
        elif a[1] == 0 and a[0] != 0:
            bx = (b / a[0],)
    sup = spec.support
    xs = grid.x.points(bx, sup[0])
    ys = grid.y.points(by, sup[1])
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.column_stack([X.ravel(), Y.ravel()])
    e = np.asarray(event.contains(P), dtype=float)
    if not e.any():
        raise InfeasibleDiscretization("no grid point lies in the event")
    gv = np.asarray(cost(np.asarray(decision, dtype=float), P), dtype=float)
    scale = np.array([max(1.0, abs(v)) for v in values])
    H = np.vstack([f(P) for f in funcs]) / scale[:, None]
    v = np.asarray(values) / scale
    n = len(P)
    A = sparse.hstack([sparse.csr_matrix(H), sparse.csr_matrix(-v[:, None])]).tocsr()
    eq = [i for i, s in enumerate(senses) if s == "eq"]
    ub = [i for i, s in enumerate(senses) if s == "le"]
    A_eq = sparse.vstack([A[eq], sparse.csr_matrix(np.concatenate([e, [0.0]])[None, :])]).tocsr()
    b_eq = np.zeros(len(eq) + 1)
    b_eq[-1] = 1.0
    res = linprog(np.concatenate([-gv * e, [0.0]]), A_ub=A[ub] if ub else None,
                  b_ub=np.zeros(len(ub)) if ub else None, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs")
    if res.status == 2:
        raise InfeasibleDiscretization("bivariate moment system unsatisfiable on this grid")
    if res.status != 0:
        raise SolverFailure(f"bivariate oracle LP failed: {res.message}")
    alpha = float(res.x[n])
    if alpha > 1.0 / EPS_MASS:
        raise EventMassVanishes("worst-case event mass vanishes")
    return BoundResult(-float(res.fun), Status.TIGHT, event_mass=1.0 / alpha,
                       diagnostics=(f"grid {len(xs)}x{len(ys)}",))
