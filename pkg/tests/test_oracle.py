import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from condbound import closedform as cf
from condbound import oracle, sos
from condbound.errors import BracketInvalid, InfeasibleDiscretization, InvalidInput
from condbound.model import (AmbiguitySpec, FullSpace, HalfLine, MomentSpec,
                             PiecewisePolynomial, Symmetric, SymmetricUnimodal,
                             mean_variance_spec)

PP = PiecewisePolynomial


def exact_fractional_lp(points, moments, threshold, g):
    """Vertex enumeration of the scaled LP in exact rational arithmetic.

    Variables are the point weights and the scale; rows are the moment
    equalities and the unit event mass.
    """
    xs = [Fraction(x) for x in points]
    n = len(xs)
    rows = []
    for j, m in enumerate(moments):
        rows.append([x ** j for x in xs] + [-Fraction(m)])
    rows.append([Fraction(1) if x >= threshold else Fraction(0) for x in xs] + [Fraction(0)])
    rhs = [Fraction(0)] * len(moments) + [Fraction(1)]
    obj = [Fraction(g(x)) if x >= threshold else Fraction(0) for x in xs] + [Fraction(0)]
    best = None
    k = len(rows)
    for basis in itertools.combinations(range(n + 1), k):
        M = [[rows[i][c] for c in basis] + [rhs[i]] for i in range(k)]
        sol = _gauss(M)
        if sol is None or any(v < 0 for v in sol):
            continue
        val = sum(obj[c] * v for c, v in zip(basis, sol))
        best = val if best is None else max(best, val)
    return best


def _gauss(M):
    k = len(M)
    for col in range(k):
        piv = next((r for r in range(col, k) if M[r][col] != 0), None)
        if piv is None:
            return None
        M[col], M[piv] = M[piv], M[col]
        for r in range(k):
            if r != col and M[r][col] != 0:
                f = M[r][col] / M[col][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return [M[i][k] / M[i][i] for i in range(k)]


THREE_POINT = AmbiguitySpec(MomentSpec.power([1.0, 1.0, 1.5]), support=((0.0, 2.0),))


def test_three_point_lp_matches_vertex_enumeration():
    exact = exact_fractional_lp([0, 1, 2], [1, 1, Fraction(3, 2)], 1, lambda x: x)
    assert exact == Fraction(4, 3)
    grid = oracle.GridSpec(0.0, 2.0, 3, boundary_eps=False)
    res = oracle.primal_lp(THREE_POINT, HalfLine(1.0), PP.identity(), grid)
    assert res.value == pytest.approx(float(exact), abs=1e-9)


def test_three_point_lp_with_left_limit_atom():
    # with a point just below the threshold the middle mass leaves the event
    grid = oracle.GridSpec(0.0, 2.0, 3)
    res = oracle.primal_lp(THREE_POINT, HalfLine(1.0), PP.identity(), grid)
    assert res.value == pytest.approx(2.0, abs=1e-6)
    assert res.event_mass == pytest.approx(0.25, abs=1e-6)


def test_full_space_recovers_mean():
    spec = mean_variance_spec(1.5, 2.0)
    res = oracle.primal_lp(spec, FullSpace(), PP.identity(), oracle.default_grid(spec, 1025))
    assert res.value == pytest.approx(1.5, abs=1e-9)
    assert len(res.extremal.components) <= 4


def test_mean_variance_converges():
    spec = mean_variance_spec(0.0, 1.0)
    res = oracle.primal_lp(spec, HalfLine(-1.0), PP.identity(), oracle.GridSpec(-50, 50, 10001))
    assert 1.0 - 1e-3 <= res.value <= 1.0 + 1e-6


def test_mean_variance_extremal_support():
    spec = mean_variance_spec(0.0, 1.0)
    res = oracle.primal_lp(spec, HalfLine(-1.0), PP.identity(), oracle.default_grid(spec))
    pts = np.array(res.extremal.support_points())
    # an off-grid atom is split between its two grid neighbours
    assert len(pts) <= 4
    assert np.all(np.minimum(abs(pts + 1.0), abs(pts - 1.0)) <= 1e-2)
    assert np.any(abs(pts + 1.0) <= 1e-6) and np.any(abs(pts - 1.0) <= 1e-2)


def test_symmetric_pairs_generator():
    spec = mean_variance_spec(0.0, 1.0, structure=Symmetric(0.0))
    grid = oracle.default_grid(spec)
    assert isinstance(grid.generator, oracle.SymmetricPairs)
    res = oracle.primal_lp_structured(spec, HalfLine(-0.5), PP.identity(), grid)
    assert res.value == pytest.approx(1.0, abs=1e-4)


def test_dirac_plus_uniform_generator():
    spec = mean_variance_spec(0.0, 1.0, structure=SymmetricUnimodal(0.0))
    grid = oracle.default_grid(spec)
    res = oracle.primal_lp_structured(spec, HalfLine(-0.5), PP.identity(), grid)
    assert res.value == pytest.approx(0.5 * (-0.5 + math.sqrt(3.0)), abs=1e-4)
    assert len(res.extremal.components) <= 4


def test_structured_needs_generator():
    spec = mean_variance_spec(0.0, 1.0)
    with pytest.raises(InvalidInput):
        oracle.primal_lp_structured(spec, HalfLine(-0.5), PP.identity(), oracle.default_grid(spec))


def test_degenerate_point_mass():
    spec = AmbiguitySpec(MomentSpec.power([1.0, 2.0, 4.0]))
    g = PP.polynomial([1.0, 0.0, 3.0])
    res = oracle.primal_lp(spec, HalfLine(1.5), g, oracle.GridSpec(1.0, 3.0, 3, boundary_eps=False))
    assert res.value == pytest.approx(g(2.0), abs=1e-9)


def test_unreachable_moments():
    spec = mean_variance_spec(10.0, 1.0)
    with pytest.raises(InfeasibleDiscretization):
        oracle.primal_lp(spec, HalfLine(0.0), PP.identity(), oracle.GridSpec(0.0, 5.0, 101))


def test_charnes_cooper_consistency():
    spec = mean_variance_spec(1.0, 0.5)
    sol = oracle.solve_lp(spec, HalfLine(0.5), PP.identity(), oracle.default_grid(spec, 2049))
    w = sol.weights
    assert w.sum() == pytest.approx(1.0, abs=1e-9)
    inside = np.array([HalfLine(0.5).contains(getattr(c, "point", math.nan))
                       for c in sol.components])
    assert sol.alpha * w[inside].sum() == pytest.approx(1.0, abs=1e-9)


def test_grid_refinement_never_decreases():
    spec = mean_variance_spec(0.0, 1.0)
    grid = oracle.default_grid(spec, 257)
    vals = []
    for _ in range(4):
        vals.append(oracle.primal_lp(spec, HalfLine(-1.3), PP.identity(), grid).value)
        grid = grid.refined()
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_refined_grid_is_nested():
    g = oracle.GridSpec(-1.0, 1.0, 9)
    assert set(g.base_points()) <= set(g.refined().base_points())


# ---------------------------------------------------------------------------
# parametric bisection
# ---------------------------------------------------------------------------

def sos_inner():
    def inner(spec, event, g, tau):
        prob = sos.DualBoundProblem.from_spec(spec, event, g)
        return sos.conditional_phi(prob)(tau)
    return inner


def test_bisection_mean_variance():
    spec = mean_variance_spec(0.0, 1.0)
    tau = oracle.dinkelbach_bisection(spec, HalfLine(-1.0), PP.identity(), sos_inner(), tol=1e-6)
    assert tau == pytest.approx(1.0, abs=2e-6)


def test_bisection_on_grid():
    spec = mean_variance_spec(0.0, 1.0)
    inner = oracle.lp_inner(oracle.GridSpec(-50, 50, 10001))
    tau = oracle.dinkelbach_bisection(spec, HalfLine(-1.0), PP.identity(), inner, -5.0, 5.0)
    assert tau == pytest.approx(1.0, abs=1e-3)


def test_bisection_constant_objective():
    spec = mean_variance_spec(0.0, 1.0)
    tau = oracle.dinkelbach_bisection(spec, HalfLine(-1.0), PP.constant(3.0), sos_inner(),
                                      tol=1e-8)
    assert tau == pytest.approx(3.0, abs=1e-7)


def test_bisection_symmetric():
    spec = mean_variance_spec(0.0, 1.0, structure=Symmetric(0.0))
    tau = oracle.dinkelbach_bisection(spec, HalfLine(-2.0), PP.identity(), sos_inner(), tol=1e-6)
    assert tau == pytest.approx(2.0 / 7.0, abs=2e-6)


def test_bisection_rejects_bad_bracket():
    spec = mean_variance_spec(0.0, 1.0)
    with pytest.raises(BracketInvalid):
        oracle.dinkelbach_bisection(spec, HalfLine(-1.0), PP.identity(), sos_inner(), 2.0, 3.0)


# ---------------------------------------------------------------------------
# refinement driver
# ---------------------------------------------------------------------------

def test_refine_closes_gap():
    spec = mean_variance_spec(0.0, 1.0)
    ref = oracle.refine_until(spec, HalfLine(-1.0), PP.identity(), 1e-3, 1.0)
    assert ref.closed
    assert 0.0 <= ref.result.gap <= 1e-3


def test_refine_divergent_instance_stays_open():
    spec = mean_variance_spec(0.0, 1.0)
    ref = oracle.refine_until(spec, HalfLine(0.0), PP.identity(), 1e-3, 1e3,
                              oracle.default_grid(spec, 257), 4097)
    assert not ref.closed
    vals = [v for _, v in ref.history]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_refine_constant_objective_closes_at_once():
    spec = mean_variance_spec(0.0, 1.0)
    ref = oracle.refine_until(spec, HalfLine(-1.0), PP.constant(2.0), 1e-9, 2.0)
    assert ref.closed and len(ref.history) == 1
    assert ref.result.gap == pytest.approx(0.0, abs=1e-9)


def test_refine_needs_finite_reference():
    with pytest.raises(InvalidInput):
        oracle.refine_until(mean_variance_spec(0.0, 1.0), HalfLine(0.0), PP.identity(), 1e-3,
                            math.inf)


# ---------------------------------------------------------------------------
# support extraction
# ---------------------------------------------------------------------------

def test_extracted_support_within_row_count():
    spec = mean_variance_spec(0.0, 1.0, structure=SymmetricUnimodal(0.0))
    sol = oracle.solve_lp(spec, HalfLine(-2.0), PP.identity(), oracle.default_grid(spec))
    dist = oracle.extract_support(sol)
    assert len(dist.components) <= sol.order + 2


def test_closed_form_extremal_is_oracle_feasible():
    ans = cf.bound_mean_variance(0.0, 1.0, -1.0)
    pts = ans.extremal.support_points()
    spec = mean_variance_spec(0.0, 1.0)
    res = oracle.primal_lp(spec, HalfLine(-1.0), PP.identity(),
                           oracle.GridSpec(-12.0, 12.0, 1025, forced=tuple(pts)))
    assert res.value == pytest.approx(ans.value, abs=1e-6)


def test_widened_grid_is_nested():
    g = oracle.GridSpec(-1.0, 1.0, 9)
    w = g.widened()
    assert (w.lo, w.hi, w.num_points) == (-2.0, 2.0, 17)
    assert set(g.base_points()) <= set(w.base_points())
    assert g.widened((0.0, math.inf)).lo == 0.0


def test_refine_widens_when_mass_escapes():
    # the supremum needs a vanishing far atom, so only a wider grid closes the gap
    mu, s, t = 1.2435856998608412, 1.1512693992213403, 0.1102320495321194
    spec = AmbiguitySpec(MomentSpec.power(sos.normal_moments(mu, s, 4)))
    ref = oracle.refine_until(spec, HalfLine(t), PP.identity(), 2.5e-3, 2.412496417829966,
                              oracle.default_grid(spec, 2 ** 12 + 1, 12.0), 2 ** 15 + 1)
    assert ref.closed
    assert ref.grid.hi - ref.grid.lo > 24.0 * s
