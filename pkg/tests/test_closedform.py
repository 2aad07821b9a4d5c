import math

import numpy as np
import pytest

from condbound import closedform as cf
from condbound import oracle
from condbound.errors import InvalidDispersion, PreconditionViolated, SupportViolation
from condbound.model import (MAD, AmbiguitySpec, ConvexDispersion, HalfLine, MomentSpec,
                             PiecewisePolynomial, Status, Symmetric, SymmetricUnimodal,
                             Unstructured, conditional_expectation, mean_variance_spec)

PP = PiecewisePolynomial
B = cf.Branch


def certificate_holds(ans, xs, tol=1e-9):
    row, slack = ans.dual.slack(ans.result.dual_certificate, xs)
    scale = max(1.0, abs(ans.value))
    return row <= tol * scale and slack.min() >= -tol * scale


def oracle_value(spec, t, g=None, points=2 ** 13 + 1, width=12.0):
    g = g or PP.identity()
    return oracle.primal_lp(spec, HalfLine(t), g,
                            oracle.default_grid(spec, points, width)).value


# ---------------------------------------------------------------------------
# mean-variance
# ---------------------------------------------------------------------------

def test_mean_variance_reference_point():
    ans = cf.bound_mean_variance(0.0, 1.0, -1.0)
    assert ans.value == pytest.approx(1.0, abs=1e-12)
    assert ans.branch is B.ONE
    assert certificate_holds(ans, np.linspace(-20, 20, 4001))


def test_mean_variance_oracle_cross_check():
    spec = mean_variance_spec(0.0, 1.0)
    assert abs(oracle_value(spec, -1.0) - 1.0) <= 1e-4


def test_mean_variance_shifted():
    assert cf.bound_mean_variance(5.0, 2.0, 3.0).value == pytest.approx(7.0, abs=1e-12)


def test_mean_variance_diverges_at_mean():
    ans = cf.bound_mean_variance(0.0, 1.0, 0.0)
    assert ans.result.status is Status.DIVERGENT
    assert math.isinf(ans.value)


def test_mean_variance_maximizing_sequence_grows():
    ans = cf.bound_mean_variance(0.0, 1.0, 0.5)
    vals = [conditional_expectation(ans.sequence.at(k), PP.identity(), HalfLine(0.5))
            for k in (2.0, 10.0, 100.0)]
    assert vals[0] < vals[1] < vals[2]


def test_extremal_attains_value():
    ans = cf.bound_mean_variance(1.0, 2.0, -1.5)
    moments = ans.dual.moments(ans.extremal)
    np.testing.assert_allclose(moments, [1.0, 1.0, 5.0], atol=1e-12)
    # the atom at the threshold sits just outside the event
    num = ans.extremal.expect(PP.identity(), HalfLine(-1.5))
    den = ans.extremal.mass(HalfLine(-1.5))
    assert num / den == pytest.approx(ans.value, rel=1e-12)


# ---------------------------------------------------------------------------
# mean-MAD
# ---------------------------------------------------------------------------

def test_mad_branch_one():
    ans = cf.bound_mean_mad(5.0, 2.0, 0.0, 10.0, 3.0)
    assert ans.value == pytest.approx(7.0, abs=1e-12)
    assert ans.branch is B.ONE
    assert cf.mad_threshold(5.0, 2.0, 10.0) == pytest.approx(3.75)
    assert certificate_holds(ans, np.linspace(0, 10, 2001))


def test_mad_branch_two_is_support_end():
    ans = cf.bound_mean_mad(5.0, 2.0, 0.0, 10.0, 4.0)
    assert ans.value == 10.0
    assert ans.branch is B.TWO


def test_mad_oracle_cross_check():
    spec = AmbiguitySpec(MomentSpec.power([1.0, 5.0]), MAD(2.0, 0.0, 10.0), support=((0.0, 10.0),))
    for t, ref in ((3.0, 7.0), (4.0, 10.0)):
        assert abs(oracle_value(spec, t) - ref) <= 1e-3


def test_mad_vanishing_dispersion():
    assert cf.bound_mean_mad(5.0, 1e-9, 0.0, 10.0, 3.0).value == pytest.approx(5.0, abs=1e-8)


def test_mad_rejects_excess_dispersion():
    with pytest.raises(InvalidDispersion):
        cf.bound_mean_mad(5.0, 6.0, 0.0, 10.0, 3.0)


def test_mad_threshold_outside_support():
    with pytest.raises(SupportViolation):
        cf.bound_mean_mad(5.0, 2.0, 0.0, 10.0, 11.0)


# ---------------------------------------------------------------------------
# convex dispersion
# ---------------------------------------------------------------------------

def test_convex_reduces_to_mean_variance():
    mu, s, t = 1.0, 2.0, -0.5
    ans = cf.bound_mean_convex_dispersion(mu, s * s + mu * mu, PP.monomial(2), t)
    assert ans.value == pytest.approx(cf.bound_mean_variance(mu, s, t).value, abs=1e-10)
    assert ans.value == pytest.approx(mu + s * s / (mu - t), abs=1e-10)


def test_convex_reduces_to_mad():
    mu, d, t = 5.0, 2.0, 3.0
    ans = cf.bound_mean_convex_dispersion(mu, d, PP.abs_dev(mu), t)
    assert ans.value == pytest.approx(cf.bound_mean_mad(mu, d, 0.0, 10.0, t).value, abs=1e-10)


def test_convex_huber_against_oracle():
    huber = PP.huber(1.0)
    ans = cf.bound_mean_convex_dispersion(0.0, 0.5, huber, -1.0)
    assert ans.result.status is Status.TIGHT
    spec = AmbiguitySpec(MomentSpec.power([1.0, 0.0]), ConvexDispersion(huber, 0.5))
    got = oracle.primal_lp(spec, HalfLine(-1.0), PP.identity(),
                           oracle.GridSpec(-60.0, 60.0, 2 ** 14 + 1)).value
    assert got <= ans.value + 1e-6
    assert ans.value - got <= 1e-4


def test_convex_rejects_nonconvex():
    with pytest.raises(InvalidDispersion):
        cf.bound_mean_convex_dispersion(0.0, 1.0, PP.polynomial([0.0, 0.0, 0.0, 1.0]), -1.0)


def test_convex_no_tangent_above_mean():
    ans = cf.bound_mean_convex_dispersion(0.0, 1.0, PP.monomial(2), 0.5)
    assert ans.result.status is Status.NO_FEASIBLE_TANGENT


# ---------------------------------------------------------------------------
# symmetric
# ---------------------------------------------------------------------------

def test_symmetric_far_threshold():
    ans = cf.bound_symmetric(0.0, 1.0, -2.0)
    assert ans.value == pytest.approx(2.0 / 7.0, abs=1e-12)
    assert ans.branch is B.ONE
    assert certificate_holds(ans, np.linspace(0, 30, 3001))


def test_symmetric_near_threshold():
    ans = cf.bound_symmetric(0.0, 1.0, -0.5)
    assert ans.value == pytest.approx(1.0, abs=1e-12)
    assert ans.branch is B.TWO


def test_symmetric_at_mean_is_finite():
    # half the mass sits at or above the center and E|X - mu| <= sigma
    ans = cf.bound_symmetric(0.0, 1.0, 0.0)
    assert ans.value == pytest.approx(1.0, abs=1e-12)
    assert certificate_holds(ans, np.linspace(0, 30, 3001))


def test_symmetric_diverges_above_mean():
    assert cf.bound_symmetric(0.0, 1.0, 0.1).result.status is Status.DIVERGENT


@pytest.mark.parametrize("t", [-2.0, -0.5])
def test_symmetric_oracle_cross_check(t):
    spec = mean_variance_spec(0.0, 1.0, structure=Symmetric(0.0))
    ref = cf.bound_symmetric(0.0, 1.0, t).value
    assert abs(oracle_value(spec, t) - ref) <= 1e-4


# ---------------------------------------------------------------------------
# symmetric unimodal
# ---------------------------------------------------------------------------

def test_unimodal_middle_branch():
    ans = cf.bound_symmetric_unimodal(0.0, 1.0, -0.5)
    assert ans.value == pytest.approx(0.5 * (-0.5 + math.sqrt(3.0)), abs=1e-12)
    assert ans.branch is B.TWO


def test_unimodal_quartic_branch():
    ans = cf.bound_symmetric_unimodal(0.0, 1.0, -2.0)
    assert ans.branch is B.ONE
    # frozen from the conic dual and the generator LP, which agree to 3e-9
    assert ans.value == pytest.approx(0.1524181642, abs=1e-9)
    assert certificate_holds(ans, np.linspace(0, 30, 3001))


def test_unimodal_threshold_value():
    assert cf.unimodal_threshold(0.0, 1.0) == pytest.approx(-3 * math.sqrt(3) / 5)


@pytest.mark.parametrize("t", [-2.0, -0.5])
def test_unimodal_oracle_cross_check(t):
    spec = mean_variance_spec(0.0, 1.0, structure=SymmetricUnimodal(0.0))
    ref = cf.bound_symmetric_unimodal(0.0, 1.0, t).value
    assert abs(oracle_value(spec, t) - ref) <= 1e-4


def test_unimodal_at_mean_is_finite():
    ans = cf.bound_symmetric_unimodal(0.0, 1.0, 0.0)
    assert ans.value == pytest.approx(math.sqrt(3.0) / 2, abs=1e-12)


def test_unimodal_diverges_above_mean():
    assert cf.bound_symmetric_unimodal(0.0, 1.0, 0.1).result.status is Status.DIVERGENT


# ---------------------------------------------------------------------------
# conditional tail probability
# ---------------------------------------------------------------------------

def test_tail_probability_reference_point():
    # the two-point upper case needs mean - p > sigma; here they are equal
    ans = cf.bound_conditional_tail_probability(5.0, 1.0, 4.0, 7.0)
    assert ans.value == pytest.approx(0.25, abs=1e-12)
    assert certificate_holds(ans, np.linspace(0, 40, 8001))
    spec = mean_variance_spec(5.0, 1.0, support=(0.0, math.inf))
    assert abs(oracle_value(spec, 4.0, PP.step(7.0)) - 0.25) <= 1e-3


def test_tail_probability_equal_levels():
    assert cf.bound_conditional_tail_probability(5.0, 1.0, 4.0, 4.0).value == 1.0


def test_tail_probability_middle_branch():
    ans = cf.bound_conditional_tail_probability(5.0, 1.0, 3.0, 5.6)
    assert ans.branch is B.TWO
    assert ans.value == pytest.approx((5.0 / 5.4) ** 2, abs=1e-12)
    spec = mean_variance_spec(5.0, 1.0, support=(0.0, math.inf))
    assert abs(oracle_value(spec, 3.0, PP.step(5.6)) - ans.value) <= 1e-3


def test_tail_probability_upper_branch():
    ans = cf.bound_conditional_tail_probability(5.0, 1.0, 3.0, 10.0)
    assert ans.branch is B.ONE
    assert ans.value == pytest.approx(1.0 / 26.0, abs=1e-12)


def test_tail_probability_needs_positive_level():
    with pytest.raises(PreconditionViolated):
        cf.bound_conditional_tail_probability(5.0, 1.0, 0.0, 3.0)


# ---------------------------------------------------------------------------
# regret-optimal pricing
# ---------------------------------------------------------------------------

def grid_search(mu, sigma, n=10 ** 6):
    ps = np.linspace(0.0, mu, n + 2)[1:-1]
    f = np.maximum(sigma ** 2 / (ps * (mu - ps)) + mu / ps, sigma ** 2 / (mu - ps) ** 2 + 1)
    i = int(np.argmin(f))
    return ps[i], f[i]


@pytest.mark.parametrize("mu,sigma", [(1.0, 0.5), (10.0, 2.0)])
def test_price_against_grid(mu, sigma):
    p, v = cf.optimal_regret_price(mu, sigma)
    gp, gv = grid_search(mu, sigma)
    assert abs(p - gp) <= 2 * mu / 1e6
    assert 0.0 <= gv - v <= 1e-5
    a, b = cf.regret_branches(mu, sigma, p)
    assert a == pytest.approx(b, rel=1e-10)


def test_price_vanishing_variance():
    p, v = cf.optimal_regret_price(1.0, 1e-4)
    assert p == pytest.approx(1.0, abs=1e-2)
    assert v == pytest.approx(1.0, abs=1e-2)


def test_price_needs_positive_mean():
    with pytest.raises(PreconditionViolated):
        cf.optimal_regret_price(-1.0, 1.0)


def test_unstructured_dominates_structured():
    for t in (-3.0, -1.5, -0.7, -0.2):
        a = cf.bound_mean_variance(0.0, 1.0, t).value
        b = cf.bound_symmetric(0.0, 1.0, t).value
        c = cf.bound_symmetric_unimodal(0.0, 1.0, t).value
        assert c <= b + 1e-12 and b <= a + 1e-12


def test_unstructured_has_no_structure():
    assert isinstance(cf.bound_mean_variance(0.0, 1.0, -1.0).dual.structure, Unstructured)
