import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from condbound import closedform as cf
from condbound import oracle, sos
from condbound.model import (ExplicitDistribution, FullSpace, HalfLine, MomentSpec,
                             PiecewisePolynomial, Unstructured, conditional_expectation,
                             dual_slack, mean_variance_spec)

PP = PiecewisePolynomial
CLOSED = (cf.bound_mean_variance, cf.bound_symmetric, cf.bound_symmetric_unimodal)
FAST = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
SLOW = settings(max_examples=12, deadline=None, suppress_health_check=[HealthCheck.too_slow])

mus = st.floats(-10, 10)
sigmas = st.floats(0.1, 5)
gaps = st.floats(0.1, 3)          # distance of t below the mean, in sigmas


@FAST
@given(mus, sigmas, gaps, st.floats(0.1, 10), st.floats(-5, 5), st.sampled_from(CLOSED))
def test_closed_forms_are_affine_equivariant(mu, s, k, a, b, fn):
    t = mu - k * s
    lhs = fn(a * mu + b, a * s, a * t + b).value
    rhs = a * fn(mu, s, t).value + b
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9 * max(1.0, abs(a * mu) + abs(b)))


@FAST
@given(mus, sigmas, gaps)
def test_structure_ordering(mu, s, k):
    t = mu - k * s
    su, sy, mv = (fn(mu, s, t).value for fn in reversed(CLOSED))
    assert su <= sy + 1e-9 * max(1.0, abs(sy))
    assert sy <= mv + 1e-9 * max(1.0, abs(mv))


@FAST
@given(mus, sigmas, gaps, st.sampled_from(CLOSED))
def test_closed_form_extremal_attains_value(mu, s, k, fn):
    t = mu - k * s
    ans = fn(mu, s, t)
    got = conditional_expectation(ans.extremal, PP.identity(), HalfLine(t))
    assert got == pytest.approx(ans.value, rel=1e-6, abs=1e-6)
    np.testing.assert_allclose(ans.dual.moments(ans.extremal), ans.dual.values,
                               rtol=1e-9, atol=1e-9)


@FAST
@given(mus, sigmas, gaps, st.sampled_from(CLOSED))
def test_closed_form_certificate_is_dual_feasible(mu, s, k, fn):
    t = mu - k * s
    ans = fn(mu, s, t)
    xs = np.linspace(mu - 30 * s, mu + 30 * s, 6001)
    row, slack = ans.dual.slack(ans.result.dual_certificate, xs)
    scale = max(1.0, abs(ans.value))
    assert row <= 1e-9 * scale
    assert slack.min() >= -1e-9 * scale


@SLOW
@given(st.floats(-2, 2), st.floats(0.5, 2), gaps, st.sampled_from(CLOSED))
def test_weak_duality_against_grid(mu, s, k, fn):
    t = mu - k * s
    ans = fn(mu, s, t)
    spec = mean_variance_spec(mu, s, structure=ans.dual.structure)
    got = oracle.primal_lp(spec, HalfLine(t), PP.identity(), oracle.default_grid(spec, 1025)).value
    assert got <= ans.value + 1e-6


@SLOW
@given(st.floats(-2, 2), st.floats(0.5, 2), st.floats(0.2, 2))
def test_more_moments_never_loosen(mu, s, k):
    t = mu - k * s
    vals = []
    for m in (2, 4, 6):
        prob = sos.DualBoundProblem(MomentSpec.power(sos.normal_moments(mu, s, m)), HalfLine(t),
                                    PP.identity())
        vals.append(sos.dual_bound(prob).value)
    assert vals[2] <= vals[1] + 1e-6 and vals[1] <= vals[0] + 1e-6
    assert vals[0] == pytest.approx(cf.bound_mean_variance(mu, s, t).value, abs=1e-5)


@SLOW
@given(st.floats(-2, 2), st.floats(0.5, 2), st.floats(0.2, 2), st.sampled_from([2, 4, 6]))
def test_sdp_certificate_is_feasible(mu, s, k, m):
    t = mu - k * s
    prob = sos.DualBoundProblem(MomentSpec.power(sos.normal_moments(mu, s, m)), HalfLine(t),
                                PP.identity())
    res = sos.dual_bound(prob)
    row, slack = dual_slack(res.dual_certificate, prob.funcs(), prob.values(), prob.objective,
                            prob.event, Unstructured(), np.linspace(mu - 20 * s, mu + 20 * s, 8001))
    assert row <= 1e-7
    assert slack.min() >= -1e-6


@SLOW
@given(st.floats(-2, 2), st.floats(0.5, 2), st.floats(0.1, 2.5))
def test_grid_refinement_is_monotone(mu, s, k):
    spec = mean_variance_spec(mu, s)
    grid = oracle.default_grid(spec, 129)
    vals = []
    for _ in range(3):
        vals.append(oracle.primal_lp(spec, HalfLine(mu - k * s), PP.identity(), grid).value)
        grid = grid.refined()
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


atoms = st.lists(st.tuples(st.floats(-20, 20), st.floats(0.01, 1)), min_size=1, max_size=6)


@FAST
@given(atoms)
def test_full_space_conditional_is_plain_mean(pairs):
    xs, ws = zip(*pairs)
    dist = ExplicitDistribution.atoms_of(xs, ws)
    w = np.asarray(ws) / sum(ws)
    assert conditional_expectation(dist, PP.identity(), FullSpace()) == \
        pytest.approx(float(w @ np.asarray(xs)), abs=1e-9)


@FAST
@given(atoms, st.floats(0.1, 10), st.floats(-20, 20))
def test_conditional_expectation_ignores_weight_scale(pairs, scale, t):
    xs, ws = zip(*pairs)
    assume(max(xs) >= t)
    a = ExplicitDistribution.atoms_of(xs, ws)
    b = ExplicitDistribution.atoms_of(xs, [scale * w for w in ws])
    ev = HalfLine(t)
    assert conditional_expectation(a, PP.identity(), ev) == \
        pytest.approx(conditional_expectation(b, PP.identity(), ev), rel=1e-9, abs=1e-9)


@FAST
@given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(0.1, 3))
def test_convex_dispersion_quadratic_reduction(mu, s, k):
    t = mu - k * s
    ans = cf.bound_mean_convex_dispersion(mu, s * s + mu * mu, PP.monomial(2), t)
    ref = cf.bound_mean_variance(mu, s, t).value
    assert ans.value == pytest.approx(ref, rel=1e-10, abs=1e-10)
    assert math.isfinite(ans.value)
